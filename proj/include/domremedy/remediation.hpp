#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "domremedy/audit.hpp"
#include "domremedy/chunking.hpp"
#include "json.hpp"

namespace domremedy {

// Refill-on-demand token bucket; acquire() blocks until a token is free.
class TokenBucket {
 public:
  TokenBucket(double capacity, double refill_per_second);
  void acquire();
  bool try_acquire();

 private:
  void refill();

  std::mutex mutex_;
  double capacity_;
  double tokens_;
  double rate_;
  std::chrono::steady_clock::time_point last_;
};

struct ModelBackend {
  std::string model_id;
  std::size_t max_output_tokens = kDefaultChunkBudget + kDefaultHeadroom;
  std::size_t context_window = 128000;
  std::function<std::string(const std::string& prompt)> invoke;
  std::shared_ptr<TokenBucket> rate_limit;  // optional, shared by every caller of this backend

  static constexpr double temperature = 0.0;
};

// Echoes the chunk embedded in the prompt back unchanged.
ModelBackend identity_backend(std::string model_id = "identity");

// Answers from recorded transcripts, keyed by the SHA-256 of the prompt:
// <dir>/<hash>.json holding {"prompt_sha256", "completion"}.
ModelBackend replay_backend(std::string model_id, std::filesystem::path transcripts_dir);

struct HttpBackendConfig {
  std::string model_id;
  std::string model_name;  // sent on the wire; defaults to model_id
  std::string endpoint;    // full chat-completions URL
  std::string auth_env_var;
  std::size_t max_output_tokens = kDefaultChunkBudget + kDefaultHeadroom;
  std::size_t context_window = 128000;
  double requests_per_minute = 0;  // 0 disables rate limiting
  std::chrono::seconds timeout{300};
};

// Generic chat-completion wire contract: POST {model, temperature, max_tokens,
// messages}; reply choices[0].message.content.
ModelBackend http_chat_backend(const HttpBackendConfig& config);

extern const char* const kPromptTemplateVersion;
// SHA-256 of the template text, recorded in run reports.
std::string prompt_template_hash();

struct ChunkPosition {
  std::size_t ordinal = 0;
  std::size_t total = 1;
};

struct RemediationPrompt {
  std::string text;
  std::string audit_block;
  std::string chunk_html;
  std::vector<std::string> directives;
  ChunkPosition position;
};

struct PromptLimit {
  std::size_t context_window = 0;
  std::size_t max_output_tokens = 0;
  TokenEstimator estimator;
};

const std::vector<std::string>& prompt_directives();

// Deterministic; throws ContextOverflow when `limit` is given and the prompt
// does not fit in context_window - max_output_tokens.
RemediationPrompt build_prompt(const Chunk& chunk, std::span<const AuditRecord> audits, ChunkPosition position,
                               const std::optional<PromptLimit>& limit = std::nullopt);

struct ExtractedFragment {
  std::string html;
  std::vector<std::string> notes;
};

ExtractedFragment extract_fragment(std::string_view completion);

enum class ChunkStatus { Modified, Unchanged, Rejected };
std::string_view to_string(ChunkStatus status);

struct ChunkTranscript {
  std::string prompt;
  std::string completion;
  std::size_t attempts = 0;
  double elapsed_ms = 0;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  std::vector<std::string> errors;
};

struct ChunkResult {
  std::string chunk_id;
  std::size_t ordinal = 0;
  std::string modified_html;  // the original chunk when rejected
  std::vector<std::string> change_notes;
  ChunkStatus status = ChunkStatus::Unchanged;
  std::string reason;  // why it was rejected
  ChunkTranscript transcript;
};

struct RemediationOptions {
  std::size_t retries = 2;
  std::size_t parallelism = 1;
  TokenEstimator estimator = default_estimator();
  // Replaces measured durations, for reproducible transcripts.
  std::function<double()> elapsed_override;
};

// One result per chunk, in ordinal order. Failures reject the chunk and never
// abort the page.
std::vector<ChunkResult> remediate_page(const ChunkManifest& manifest, std::span<const AuditRecord> audits,
                                        const ModelBackend& backend, const RemediationOptions& options = {});

// Chunks to reassemble: modified html where accepted, originals otherwise.
std::vector<Chunk> result_chunks(const ChunkManifest& manifest, const std::vector<ChunkResult>& results);

nlohmann::ordered_json transcript_to_json(const ChunkResult& result);

}  // namespace domremedy
