#include "domremedy/remediation.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <map>
#include <thread>

#include "domremedy/error.hpp"
#include "domremedy/html.hpp"
#include "domremedy/util.hpp"
#include "httplib.h"

namespace domremedy {

namespace {

using Json = nlohmann::ordered_json;

const char* const kTemplate =
    "You are a web performance engineer. A Lighthouse audit of a web page reported the problems listed "
    "below. Improve the page so that these audits pass.\n"
    "\n"
    "Rules:\n"
    "{directives}"
    "\n"
    "Audits to resolve:\n"
    "{audits}"
    "\n"
    "This is chunk {ordinal} of {total}.\n"
    "\n"
    "{fence}html\n"
    "{chunk}\n"
    "{fence}\n";

std::string longest_backtick_fence(std::string_view text) {
  std::size_t longest = 0;
  std::size_t run = 0;
  for (char c : text) {
    run = c == '`' ? run + 1 : 0;
    longest = std::max(longest, run);
  }
  return std::string(std::max<std::size_t>(3, longest + 1), '`');
}

struct FencedBlock {
  std::string content;
  std::string info;
};

std::vector<FencedBlock> fenced_blocks(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }

  auto fence_of = [](std::string_view line) -> std::pair<char, std::size_t> {
    std::size_t indent = 0;
    while (indent < line.size() && indent < 3 && line[indent] == ' ') ++indent;
    if (indent >= line.size() || (line[indent] != '`' && line[indent] != '~')) return {0, 0};
    char c = line[indent];
    std::size_t n = 0;
    while (indent + n < line.size() && line[indent + n] == c) ++n;
    if (n < 3) return {0, 0};
    return {c, n};
  };

  std::vector<FencedBlock> blocks;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto [c, n] = fence_of(lines[i]);
    if (!c) continue;
    std::string_view info = lines[i].substr(lines[i].find(c) + n);
    if (c == '`' && info.find('`') != std::string_view::npos) continue;
    std::size_t j = i + 1;
    for (; j < lines.size(); ++j) {
      auto [c2, n2] = fence_of(lines[j]);
      if (c2 == c && n2 >= n && trim(lines[j]).find_first_not_of(c) == std::string::npos) break;
    }
    FencedBlock block;
    block.info = trim(info);
    for (std::size_t k = i + 1; k < j && k < lines.size(); ++k) {
      if (k > i + 1) block.content += '\n';
      block.content += lines[k];
    }
    blocks.push_back(std::move(block));
    i = j;
  }
  return blocks;
}

bool has_markup(const std::vector<DomNode>& nodes) {
  return std::any_of(nodes.begin(), nodes.end(),
                     [](const DomNode& n) { return n.is_element() || n.kind == NodeKind::Comment; });
}

void collect_notes(const std::vector<DomNode>& nodes, std::vector<std::string>& notes) {
  for (const auto& n : nodes) {
    if (n.kind == NodeKind::Comment) {
      if (auto t = trim(n.text); !t.empty()) notes.push_back(t);
    } else if (n.kind == NodeKind::Script || n.kind == NodeKind::Stylesheet) {
      std::size_t pos = 0;
      while ((pos = n.text.find("/*", pos)) != std::string::npos) {
        std::size_t end = n.text.find("*/", pos + 2);
        if (end == std::string::npos) break;
        if (auto t = trim(std::string_view(n.text).substr(pos + 2, end - pos - 2)); !t.empty()) notes.push_back(t);
        pos = end + 2;
      }
    }
    collect_notes(n.children, notes);
  }
}

bool same_fragment(const std::string& a, const std::string& b, const ChunkAnchor& anchor) {
  if (a == b) return true;
  if (anchor.whole_document) return tree_equal(parse_html(a).root, parse_html(b).root);
  auto na = parse_fragment(a, anchor.context);
  auto nb = parse_fragment(b, anchor.context);
  if (na.size() != nb.size()) return false;
  for (std::size_t i = 0; i < na.size(); ++i) {
    if (!tree_equal(na[i], nb[i])) return false;
  }
  return true;
}

std::vector<DomNode> parse_for_notes(const std::string& html) {
  try {
    return parse_fragment(html, FragmentContext{"body"});
  } catch (const Error&) {
    return {};
  }
}

}  // namespace

TokenBucket::TokenBucket(double capacity, double refill_per_second)
    : capacity_(std::max(1.0, capacity)),
      tokens_(capacity_),
      rate_(refill_per_second),
      last_(std::chrono::steady_clock::now()) {}

void TokenBucket::refill() {
  auto now = std::chrono::steady_clock::now();
  double seconds = std::chrono::duration<double>(now - last_).count();
  last_ = now;
  tokens_ = std::min(capacity_, tokens_ + seconds * rate_);
}

bool TokenBucket::try_acquire() {
  std::lock_guard lock(mutex_);
  refill();
  if (tokens_ < 1.0) return false;
  tokens_ -= 1.0;
  return true;
}

void TokenBucket::acquire() {
  while (true) {
    double wait_s = 0;
    {
      std::lock_guard lock(mutex_);
      refill();
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      wait_s = rate_ > 0 ? (1.0 - tokens_) / rate_ : 1.0;
    }
    std::this_thread::sleep_for(std::chrono::duration<double>(wait_s));
  }
}

ModelBackend identity_backend(std::string model_id) {
  ModelBackend backend;
  backend.model_id = std::move(model_id);
  backend.invoke = [](const std::string& prompt) -> std::string {
    // The prompt ends with "<fence>html\n<chunk>\n<fence>\n".
    std::size_t close_end = prompt.size() - 1;
    std::size_t close_begin = prompt.rfind('\n', close_end - 1) + 1;
    std::string fence = prompt.substr(close_begin, close_end - close_begin);
    std::size_t open = prompt.rfind("\n" + fence + "html\n", close_begin);
    if (fence.empty() || open == std::string::npos) throw Error(ErrorCode::BackendError, "prompt has no chunk");
    return prompt.substr(open + 1);
  };
  return backend;
}

ModelBackend replay_backend(std::string model_id, std::filesystem::path transcripts_dir) {
  auto recorded = std::make_shared<std::map<std::string, std::string>>();
  if (std::filesystem::exists(transcripts_dir)) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(transcripts_dir)) {
      if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& file : files) {
      try {
        auto j = Json::parse(read_file(file));
        if (j.contains("prompt_sha256") && j.contains("completion") && j["completion"].is_string()) {
          recorded->emplace(j["prompt_sha256"].get<std::string>(), j["completion"].get<std::string>());
        }
      } catch (const nlohmann::json::exception& e) {
        spdlog::warn("skipping unreadable transcript {}: {}", file.string(), e.what());
      }
    }
  } else {
    spdlog::warn("transcript directory {} does not exist", transcripts_dir.string());
  }
  ModelBackend backend;
  backend.model_id = std::move(model_id);
  backend.invoke = [recorded](const std::string& prompt) -> std::string {
    auto hash = sha256_hex(prompt);
    auto it = recorded->find(hash);
    if (it == recorded->end()) throw Error(ErrorCode::BackendError, "no recorded completion for prompt " + hash);
    return it->second;
  };
  return backend;
}

ModelBackend http_chat_backend(const HttpBackendConfig& config) {
  auto scheme_end = config.endpoint.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorCode::ConfigError, "endpoint must be a URL: " + config.endpoint);
  auto path_begin = config.endpoint.find('/', scheme_end + 3);
  std::string origin = config.endpoint.substr(0, path_begin);
  std::string path = path_begin == std::string::npos ? "/" : config.endpoint.substr(path_begin);

  ModelBackend backend;
  backend.model_id = config.model_id;
  backend.max_output_tokens = config.max_output_tokens;
  backend.context_window = config.context_window;
  if (config.requests_per_minute > 0) {
    backend.rate_limit = std::make_shared<TokenBucket>(1.0, config.requests_per_minute / 60.0);
  }
  std::string wire_model = config.model_name.empty() ? config.model_id : config.model_name;
  backend.invoke = [origin, path, wire_model, config](const std::string& prompt) -> std::string {
    const char* token = config.auth_env_var.empty() ? nullptr : std::getenv(config.auth_env_var.c_str());
    if (!config.auth_env_var.empty() && !token) {
      throw Error(ErrorCode::BackendError, "environment variable " + config.auth_env_var + " is not set");
    }
    Json body;
    body["model"] = wire_model;
    body["temperature"] = ModelBackend::temperature;
    body["max_tokens"] = config.max_output_tokens;
    body["messages"] = Json::array({Json{{"role", "user"}, {"content", prompt}}});

    httplib::Client client(origin);
    client.set_connection_timeout(config.timeout);
    client.set_read_timeout(config.timeout);
    client.set_write_timeout(config.timeout);
    httplib::Headers headers;
    if (token) headers.emplace("Authorization", std::string("Bearer ") + token);
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) throw Error(ErrorCode::BackendError, "request failed: " + httplib::to_string(res.error()));
    if (res->status != 200) {
      throw Error(ErrorCode::BackendError, "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500));
    }
    try {
      auto reply = Json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::BackendError, std::string("unexpected reply: ") + e.what());
    }
  };
  return backend;
}

const char* const kPromptTemplateVersion = "1";

std::string prompt_template_hash() {
  std::string material = kTemplate;
  for (const auto& d : prompt_directives()) material += "\n" + d;
  return sha256_hex(material);
}

const std::vector<std::string>& prompt_directives() {
  static const std::vector<std::string> directives = {
      "The page is sent in chunks of its DOM. Edit only the chunk below and return all of it, including "
      "the parts you leave alone.",
      "Return the chunk in a single html code block. After the block, name each section you modified and "
      "describe the change.",
      "Inline scripts and styles are likely minified, uglified or compressed. Touch them only when their "
      "behaviour stays the same.",
      "Avoid any change to the order of elements, to styles, or to what the page does.",
      "Mark every modification with a comment in the right format: <!-- ... --> in markup, /* ... */ inside "
      "style and script blocks.",
  };
  return directives;
}

RemediationPrompt build_prompt(const Chunk& chunk, std::span<const AuditRecord> audits, ChunkPosition position,
                               const std::optional<PromptLimit>& limit) {
  RemediationPrompt prompt;
  prompt.directives = prompt_directives();
  prompt.chunk_html = chunk.html;
  prompt.position = position;

  std::string directives;
  for (std::size_t i = 0; i < prompt.directives.size(); ++i) {
    directives += fmt::format("{}. {}\n", i + 1, prompt.directives[i]);
  }
  if (audits.empty()) {
    prompt.audit_block = "No actionable audits.\n";
  } else {
    for (const auto& a : audits) {
      prompt.audit_block += fmt::format("- key: {}\n  title: {}\n  description: {}\n  details: {}\n", a.id, a.title,
                                        a.description, a.details_raw ? *a.details_raw : "none");
    }
  }
  prompt.text = fmt::format(fmt::runtime(kTemplate), fmt::arg("directives", directives),
                            fmt::arg("audits", prompt.audit_block), fmt::arg("ordinal", position.ordinal + 1),
                            fmt::arg("total", position.total), fmt::arg("fence", longest_backtick_fence(chunk.html)),
                            fmt::arg("chunk", chunk.html));

  if (limit) {
    if (limit->max_output_tokens >= limit->context_window) {
      throw Error(ErrorCode::ContextOverflow, "max output tokens leave no room for the prompt");
    }
    std::size_t room = limit->context_window - limit->max_output_tokens;
    std::size_t tokens = limit->estimator.estimate(prompt.text);
    if (tokens > room) {
      throw Error(ErrorCode::ContextOverflow,
                  fmt::format("prompt for chunk {} needs {} tokens, {} available", chunk.chunk_id, tokens, room));
    }
  }
  return prompt;
}

ExtractedFragment extract_fragment(std::string_view completion) {
  std::vector<std::string> candidates;
  for (auto& block : fenced_blocks(completion)) {
    if (!trim(block.content).empty()) candidates.push_back(std::move(block.content));
  }
  if (candidates.empty()) {
    std::size_t first = std::string_view::npos;
    for (std::size_t i = 0; i + 1 < completion.size(); ++i) {
      char n = completion[i + 1];
      if (completion[i] == '<' && (std::isalpha(static_cast<unsigned char>(n)) || n == '!' || n == '/')) {
        first = i;
        break;
      }
    }
    std::size_t last = completion.rfind('>');
    if (first != std::string_view::npos && last != std::string_view::npos && last > first) {
      std::string candidate(completion.substr(first, last - first + 1));
      if (has_markup(parse_for_notes(candidate))) candidates.push_back(std::move(candidate));
    }
  }
  if (candidates.empty()) throw Error(ErrorCode::NoFragmentFound, "completion contains no HTML");

  auto best = std::max_element(candidates.begin(), candidates.end(),
                               [](const std::string& a, const std::string& b) { return a.size() < b.size(); });
  ExtractedFragment out;
  out.html = std::move(*best);
  collect_notes(parse_for_notes(out.html), out.notes);
  return out;
}

std::string_view to_string(ChunkStatus status) {
  switch (status) {
    case ChunkStatus::Modified: return "modified";
    case ChunkStatus::Unchanged: return "unchanged";
    case ChunkStatus::Rejected: return "rejected";
  }
  return "rejected";
}

std::vector<ChunkResult> remediate_page(const ChunkManifest& manifest, std::span<const AuditRecord> audits,
                                        const ModelBackend& backend, const RemediationOptions& options) {
  if (!backend.invoke) throw Error(ErrorCode::ConfigError, "backend " + backend.model_id + " has no invoke function");
  if (backend.max_output_tokens < manifest.chunk_budget + manifest.headroom) {
    throw Error(ErrorCode::ConfigError,
                fmt::format("backend {} allows {} output tokens, below the {} + {} chunk budget", backend.model_id,
                            backend.max_output_tokens, manifest.chunk_budget, manifest.headroom));
  }

  std::vector<ChunkResult> results(manifest.chunks.size());
  auto process = [&](std::size_t index) {
    const Chunk& chunk = manifest.chunks[index];
    const ChunkAnchor& anchor = manifest.anchors.at(chunk.chunk_id);
    ChunkResult& result = results[index];
    result.chunk_id = chunk.chunk_id;
    result.ordinal = chunk.ordinal;
    result.modified_html = chunk.html;
    auto reject = [&](std::string reason) {
      spdlog::warn("chunk {} of {} rejected, keeping the original: {}", chunk.ordinal, backend.model_id, reason);
      result.status = ChunkStatus::Rejected;
      result.reason = std::move(reason);
      result.modified_html = chunk.html;
    };

    RemediationPrompt prompt;
    try {
      prompt = build_prompt(chunk, audits, {chunk.ordinal, manifest.chunks.size()},
                            PromptLimit{backend.context_window, backend.max_output_tokens, options.estimator});
    } catch (const Error& e) {
      reject(e.what());
      return;
    }
    ChunkTranscript& t = result.transcript;
    t.prompt = prompt.text;
    t.prompt_tokens = options.estimator.estimate(prompt.text);

    auto started = std::chrono::steady_clock::now();
    bool answered = false;
    for (std::size_t attempt = 0; attempt <= options.retries && !answered; ++attempt) {
      ++t.attempts;
      try {
        if (backend.rate_limit) backend.rate_limit->acquire();
        t.completion = backend.invoke(prompt.text);
        answered = true;
      } catch (const std::exception& e) {
        t.errors.push_back(e.what());
      }
    }
    t.elapsed_ms = options.elapsed_override
                       ? options.elapsed_override()
                       : std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    if (!answered) {
      reject("backend failed " + std::to_string(t.attempts) + " times: " + t.errors.back());
      return;
    }
    t.completion_tokens = options.estimator.estimate(t.completion);

    ExtractedFragment fragment;
    try {
      fragment = extract_fragment(t.completion);
    } catch (const Error& e) {
      reject(e.what());
      return;
    }
    std::vector<std::string> original_notes;
    collect_notes(parse_for_notes(chunk.html), original_notes);
    for (auto& note : fragment.notes) {
      if (std::find(original_notes.begin(), original_notes.end(), note) == original_notes.end()) {
        result.change_notes.push_back(std::move(note));
      }
    }
    result.modified_html = std::move(fragment.html);
    result.status = same_fragment(result.modified_html, chunk.html, anchor) ? ChunkStatus::Unchanged
                                                                             : ChunkStatus::Modified;
  };

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < results.size(); i = next++) process(i);
  };
  std::size_t workers = std::max<std::size_t>(1, std::min(options.parallelism, results.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return results;
}

std::vector<Chunk> result_chunks(const ChunkManifest& manifest, const std::vector<ChunkResult>& results) {
  std::map<std::string, const ChunkResult*> by_id;
  for (const auto& r : results) by_id[r.chunk_id] = &r;
  std::vector<Chunk> chunks;
  for (const auto& original : manifest.chunks) {
    Chunk chunk = original;
    if (auto it = by_id.find(original.chunk_id); it != by_id.end() && it->second->status != ChunkStatus::Rejected) {
      chunk.html = it->second->modified_html;
    }
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

Json transcript_to_json(const ChunkResult& result) {
  Json out;
  out["chunk_id"] = result.chunk_id;
  out["ordinal"] = result.ordinal;
  out["status"] = to_string(result.status);
  out["reason"] = result.reason;
  out["prompt_sha256"] = sha256_hex(result.transcript.prompt);
  out["prompt"] = result.transcript.prompt;
  out["completion"] = result.transcript.completion;
  out["attempts"] = result.transcript.attempts;
  out["errors"] = result.transcript.errors;
  out["elapsed_ms"] = result.transcript.elapsed_ms;
  out["prompt_tokens"] = result.transcript.prompt_tokens;
  out["completion_tokens"] = result.transcript.completion_tokens;
  out["change_notes"] = result.change_notes;
  return out;
}

}  // namespace domremedy
