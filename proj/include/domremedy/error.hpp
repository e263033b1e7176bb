#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace domremedy {

enum class ErrorCode {
  EmptyDocument,
  ResourceLimit,
  MissingChunk,
  UnknownChunk,
  SpliceConflict,
  AuditorNotFound,
  AuditorCrashed,
  Timeout,
  ReportParse,
  FixtureMissing,
  ContextOverflow,
  BackendError,
  NoFragmentFound,
  UndefinedBaseline,
  DegenerateInput,
  FetchFailed,
  NotHtml,
  ConfigError,
  Io,
};

std::string_view to_string(ErrorCode code);

// All library failures surface as this type; callers switch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace domremedy
