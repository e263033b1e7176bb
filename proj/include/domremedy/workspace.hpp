#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "domremedy/audit.hpp"
#include "domremedy/chunking.hpp"
#include "domremedy/dom.hpp"
#include "domremedy/metrics.hpp"
#include "domremedy/remediation.hpp"
#include "domremedy/util.hpp"
#include "json.hpp"

namespace domremedy {

inline constexpr const char* kToolVersion = "0.1.0";

struct BackendConfig {
  std::string kind = "http";  // identity | replay | http
  HttpBackendConfig http;     // model_id, limits and wire settings
  std::filesystem::path transcripts;  // replay only
};

struct AuditorConfig {
  std::string mode = "lighthouse";  // lighthouse | replay
  std::filesystem::path path = "lighthouse";
  std::filesystem::path fixtures;  // replay only
  std::chrono::seconds timeout{180};
  std::vector<std::string> extra_args;
};

struct PipelineConfig {
  std::vector<std::string> pages;   // URLs or local paths
  std::vector<std::string> models;  // backend ids; empty means audit only
  std::size_t budget = kDefaultChunkBudget;
  std::size_t headroom = kDefaultHeadroom;
  std::string estimator = "approx-bpe";
  AuditorConfig auditor;
  CountingMode counting_mode = CountingMode::UniquePages;
  AggregationMode aggregation_mode = AggregationMode::PooledCounts;
  MetricsAggregation change_aggregation = MetricsAggregation::Pooled;
  std::size_t page_parallelism = 1;
  std::size_t chunk_parallelism = 1;
  std::size_t audit_parallelism = 1;
  std::size_t retries = 2;
  std::map<std::string, BackendConfig> backends;
  std::optional<std::filesystem::path> category_map;
  std::optional<std::filesystem::path> workspace;
  std::optional<std::uint64_t> seed;
};

// Relative paths in the file are resolved against its directory. Throws
// ConfigError for anything malformed.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig config_from_json(const nlohmann::ordered_json& json, const std::filesystem::path& base_dir);
nlohmann::ordered_json config_to_json(const PipelineConfig& config);
void validate_config(const PipelineConfig& config);

// Page ids derived from the page list: file stem or host and path, made
// filesystem safe, with -2, -3... appended to repeats.
std::vector<std::string> page_ids(const std::vector<std::string>& pages);

class Workspace {
 public:
  explicit Workspace(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path config_file() const { return root_ / "config.json"; }
  std::filesystem::path reports_dir() const { return root_ / "reports"; }
  std::filesystem::path page_dir(const std::string& page) const { return root_ / "pages" / page; }
  std::filesystem::path page_meta(const std::string& page) const { return page_dir(page) / "page.json"; }
  std::filesystem::path original_html(const std::string& page) const { return page_dir(page) / "original.html"; }
  std::filesystem::path chunks_dir(const std::string& page) const { return page_dir(page) / "chunks"; }
  std::filesystem::path audit_file(const std::string& page, const std::string& variant) const {
    return page_dir(page) / "audits" / (sanitize(variant) + ".json");
  }
  std::filesystem::path audit_parsed_file(const std::string& page, const std::string& variant) const {
    return page_dir(page) / "audits" / (sanitize(variant) + ".parsed.json");
  }
  std::filesystem::path modified_dir(const std::string& page, const std::string& model) const {
    return page_dir(page) / "modified" / sanitize(model);
  }
  std::filesystem::path modified_chunks_dir(const std::string& page, const std::string& model) const {
    return modified_dir(page, model) / "chunks";
  }
  std::filesystem::path results_file(const std::string& page, const std::string& model) const {
    return modified_dir(page, model) / "results.json";
  }
  std::filesystem::path reassembled_html(const std::string& page, const std::string& model) const {
    return modified_dir(page, model) / "reassembled.html";
  }
  std::filesystem::path diff_file(const std::string& page, const std::string& model) const {
    return page_dir(page) / "diffs" / (sanitize(model) + ".json");
  }
  std::filesystem::path transcripts_dir(const std::string& page, const std::string& model) const {
    return page_dir(page) / "transcripts" / sanitize(model);
  }

  std::vector<std::string> pages() const;  // page directories present, sorted

 private:
  static std::string sanitize(const std::string& s);
  std::filesystem::path root_;
};

struct FetchedPage {
  DomDocument doc;
  std::string body;  // bytes as received
  std::string final_url;
};

struct FetchOptions {
  std::chrono::seconds timeout{30};
  int max_redirects = 3;
  std::string user_agent =
      "Mozilla/5.0 (X11; Linux x86_64) AppleWebKit/537.36 (KHTML, like Gecko) Chrome/126.0 Safari/537.36";
  std::function<std::string()> clock = [] { return utc_timestamp(); };
};

// http(s) URL, file:// URL or local path.
FetchedPage fetch_page_raw(const std::string& source, const FetchOptions& options = {});
DomDocument fetch_page(const std::string& source, const FetchOptions& options = {});

enum class Stage { Fetch, Chunk, AuditOriginal, Remediate, Reassemble, AuditModified, Diff, Report };
std::string_view to_string(Stage stage);

struct StageEvent {
  Stage stage = Stage::Fetch;
  std::string page;
  std::string model;
  std::string status;  // done | skipped | failed | planned
  std::string detail;
};

struct PipelineOptions {
  bool force = false;
  bool dry_run = false;
  std::vector<std::string> model_filter;  // empty: every configured model
  std::function<void(const StageEvent&)> on_event;
};

struct PipelineOutcome {
  std::size_t failures = 0;
  std::optional<RunReport> report;
};

class Pipeline {
 public:
  Pipeline(PipelineConfig config, Workspace workspace, PipelineOptions options);

  PipelineOutcome fetch();
  PipelineOutcome chunk();
  PipelineOutcome audit();  // originals, plus modified pages already reassembled
  PipelineOutcome remediate();
  PipelineOutcome reassemble();
  PipelineOutcome diff();
  PipelineOutcome report();
  PipelineOutcome run();  // all of the above, in order

  RunReport build_report() const;
  const std::vector<std::string>& page_ids() const { return pages_; }
  std::vector<std::string> models() const;

 private:
  PipelineOutcome for_each_page(Stage stage, const std::function<void(const std::string&)>& body);
  PipelineOutcome for_each_page_model(Stage stage,
                                      const std::function<void(const std::string&, const std::string&)>& body);
  void emit(Stage stage, const std::string& page, const std::string& model, const std::string& status,
            const std::string& detail = {}) const;
  bool done(const std::filesystem::path& artifact) const;
  std::string now() const;

  void fetch_page_stage(const std::string& page);
  void chunk_stage(const std::string& page);
  void audit_original_stage(const std::string& page);
  void remediate_stage(const std::string& page, const std::string& model);
  void reassemble_stage(const std::string& page, const std::string& model);
  void audit_modified_stage(const std::string& page, const std::string& model);
  void diff_stage(const std::string& page, const std::string& model);
  void write_reports(const RunReport& report) const;

  ModelBackend make_backend(const std::string& model) const;
  bool has_failed(const std::string& key) const;
  void mark_failed(const std::string& key);

  PipelineConfig config_;
  Workspace ws_;
  PipelineOptions options_;
  std::vector<std::string> pages_;
  std::map<std::string, std::string> sources_;
  CategoryMap categories_;
  TokenEstimator estimator_;
  std::unique_ptr<Auditor> auditor_;
  std::shared_ptr<class AuditGate> audit_gate_;
  std::map<std::string, ModelBackend> backends_;
  std::shared_ptr<std::mutex> failed_mutex_;
  std::shared_ptr<std::mutex> event_mutex_;
  std::set<std::string> failed_;  // "page" or "page\nmodel"
};

// Entry point of the domremedy command.
int run_cli(int argc, char** argv);

}  // namespace domremedy
