#include "domremedy/error.hpp"

namespace domremedy {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyDocument: return "EmptyDocument";
    case ErrorCode::ResourceLimit: return "ResourceLimit";
    case ErrorCode::MissingChunk: return "MissingChunk";
    case ErrorCode::UnknownChunk: return "UnknownChunk";
    case ErrorCode::SpliceConflict: return "SpliceConflict";
    case ErrorCode::AuditorNotFound: return "AuditorNotFound";
    case ErrorCode::AuditorCrashed: return "AuditorCrashed";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::ReportParse: return "ReportParse";
    case ErrorCode::FixtureMissing: return "FixtureMissing";
    case ErrorCode::ContextOverflow: return "ContextOverflow";
    case ErrorCode::BackendError: return "BackendError";
    case ErrorCode::NoFragmentFound: return "NoFragmentFound";
    case ErrorCode::UndefinedBaseline: return "UndefinedBaseline";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::FetchFailed: return "FetchFailed";
    case ErrorCode::NotHtml: return "NotHtml";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace domremedy
