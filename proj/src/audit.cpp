#include "domremedy/audit.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <set>
#include <thread>

#include "domremedy/error.hpp"
#include "domremedy/html.hpp"
#include "domremedy/util.hpp"
#include "httplib.h"
#include "process.hpp"

namespace domremedy {

namespace {

using Json = nlohmann::ordered_json;

// Finds raw value spans without building a tree. Input has already been
// validated by the real parser, so the scanner can be lenient.
class RawScanner {
 public:
  explicit RawScanner(std::string_view text) : s_(text) {}

  std::size_t skip_ws(std::size_t p) const {
    while (p < s_.size() && (s_[p] == ' ' || s_[p] == '\t' || s_[p] == '\n' || s_[p] == '\r')) ++p;
    return p;
  }

  std::size_t string_end(std::size_t p) const {
    for (++p; p < s_.size(); ++p) {
      if (s_[p] == '\\') {
        ++p;
      } else if (s_[p] == '"') {
        return p + 1;
      }
    }
    return s_.size();
  }

  std::size_t value_end(std::size_t p) const {
    if (p >= s_.size()) return p;
    if (s_[p] == '"') return string_end(p);
    if (s_[p] == '{' || s_[p] == '[') {
      int depth = 0;
      while (p < s_.size()) {
        char c = s_[p];
        if (c == '"') {
          p = string_end(p);
          continue;
        }
        if (c == '{' || c == '[') ++depth;
        if (c == '}' || c == ']') {
          if (--depth == 0) return p + 1;
        }
        ++p;
      }
      return p;
    }
    while (p < s_.size() && s_[p] != ',' && s_[p] != '}' && s_[p] != ']' && s_[p] != ' ' && s_[p] != '\n' &&
           s_[p] != '\t' && s_[p] != '\r') {
      ++p;
    }
    return p;
  }

  // Calls f(key, value_begin, value_end) for each member of the object at p.
  template <class F>
  void members(std::size_t p, F&& f) const {
    p = skip_ws(p);
    if (p >= s_.size() || s_[p] != '{') return;
    p = skip_ws(p + 1);
    while (p < s_.size() && s_[p] == '"') {
      std::size_t key_end = string_end(p);
      std::string key = Json::parse(s_.substr(p, key_end - p)).get<std::string>();
      p = skip_ws(key_end);
      p = skip_ws(p + 1);  // ':'
      std::size_t end = value_end(p);
      f(key, p, end);
      p = skip_ws(end);
      if (p < s_.size() && s_[p] == ',') p = skip_ws(p + 1);
    }
  }

  std::string_view slice(std::size_t begin, std::size_t end) const { return s_.substr(begin, end - begin); }

 private:
  std::string_view s_;
};

std::map<std::string, std::string> details_spans(std::string_view text) {
  RawScanner scan(text);
  std::map<std::string, std::string> spans;
  scan.members(0, [&](const std::string& key, std::size_t begin, std::size_t) {
    if (key != "audits") return;
    scan.members(begin, [&](const std::string& id, std::size_t audit_begin, std::size_t) {
      scan.members(audit_begin, [&](const std::string& field, std::size_t b, std::size_t e) {
        if (field == "details") spans[id] = std::string(scan.slice(b, e));
      });
    });
  });
  return spans;
}

std::optional<std::string> optional_string(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw Error(ErrorCode::ReportParse, std::string("field '") + key + "' is not a string");
  return it->get<std::string>();
}

struct SeedEntry {
  const char* id;
  AuditCategory category;
};

constexpr SeedEntry kSeed[] = {
    {"crawlable-anchors", AuditCategory::SeoAccessibility},
    {"link-text", AuditCategory::SeoAccessibility},
    {"is-crawlable", AuditCategory::SeoAccessibility},
    {"meta-description", AuditCategory::SeoAccessibility},
    {"hreflang", AuditCategory::SeoAccessibility},
    {"aria-prohibited-attr", AuditCategory::SeoAccessibility},
    {"aria-hidden-focus", AuditCategory::SeoAccessibility},
    {"image-alt", AuditCategory::SeoAccessibility},
    {"aria-allowed-attr", AuditCategory::SeoAccessibility},
    {"listitem", AuditCategory::SeoAccessibility},
    {"list", AuditCategory::SeoAccessibility},
    {"aria-dialog-name", AuditCategory::SeoAccessibility},
    {"label-content-name-mismatch", AuditCategory::SeoAccessibility},
    {"input-button-name", AuditCategory::SeoAccessibility},
    {"html-lang-valid", AuditCategory::SeoAccessibility},
    {"aria-tooltip-name", AuditCategory::SeoAccessibility},
    {"link-name", AuditCategory::SeoAccessibility},
    {"uses-rel-preconnect", AuditCategory::NetworkOptimization},
    {"uses-http2", AuditCategory::NetworkOptimization},
    {"third-party-cookies", AuditCategory::NetworkOptimization},
    {"is-on-https", AuditCategory::NetworkOptimization},
    {"total-byte-weight", AuditCategory::NetworkOptimization},
    {"uses-text-compression", AuditCategory::NetworkOptimization},
    {"uses-long-cache-ttl", AuditCategory::NetworkOptimization},
    {"redirects", AuditCategory::NetworkOptimization},
    {"charset", AuditCategory::InitialLoad},
    {"lcp-lazy-loaded", AuditCategory::InitialLoad},
    {"offscreen-images", AuditCategory::InitialLoad},
    {"render-blocking-resources", AuditCategory::InitialLoad},
    {"first-contentful-paint", AuditCategory::InitialLoad},
    {"speed-index", AuditCategory::InitialLoad},
    {"largest-contentful-paint-element", AuditCategory::InitialLoad},
    {"prioritize-lcp-image", AuditCategory::InitialLoad},
    {"largest-contentful-paint", AuditCategory::InitialLoad},
    {"viewport", AuditCategory::VisualStability},
    {"meta-viewport", AuditCategory::VisualStability},
    {"image-size-responsive", AuditCategory::VisualStability},
    {"image-aspect-ratio", AuditCategory::VisualStability},
    {"font-size", AuditCategory::VisualStability},
    {"color-contrast", AuditCategory::VisualStability},
    {"target-size", AuditCategory::VisualStability},
    {"dom-size", AuditCategory::VisualStability},
    {"unsized-images", AuditCategory::VisualStability},
    {"font-display", AuditCategory::VisualStability},
    {"cumulative-layout-shift", AuditCategory::VisualStability},
    {"layout-shifts", AuditCategory::VisualStability},
    {"valid-source-maps", AuditCategory::Runtime},
    {"inspector-issues", AuditCategory::Runtime},
    {"errors-in-console", AuditCategory::Runtime},
    {"deprecations", AuditCategory::Runtime},
    {"bootup-time", AuditCategory::Runtime},
    {"mainthread-work-breakdown", AuditCategory::Runtime},
    {"third-party-summary", AuditCategory::Runtime},
    {"no-document-write", AuditCategory::Runtime},
    {"duplicated-javascript", AuditCategory::ResourceOptimization},
    {"modern-image-formats", AuditCategory::ResourceOptimization},
    {"legacy-javascript", AuditCategory::ResourceOptimization},
    {"unminified-css", AuditCategory::ResourceOptimization},
    {"uses-optimized-images", AuditCategory::ResourceOptimization},
    {"unused-css-rules", AuditCategory::ResourceOptimization},
    {"uses-responsive-images", AuditCategory::ResourceOptimization},
    {"unused-javascript", AuditCategory::ResourceOptimization},
    {"unminified-javascript", AuditCategory::ResourceOptimization},
    {"uses-passive-event-listeners", AuditCategory::Interactivity},
    {"total-blocking-time", AuditCategory::Interactivity},
    {"max-potential-fid", AuditCategory::Interactivity},
    {"interactive", AuditCategory::Interactivity},
};

struct CategoryName {
  AuditCategory category;
  std::string_view key;
  std::string_view display;
};

constexpr CategoryName kCategoryNames[] = {
    {AuditCategory::InitialLoad, "InitialLoad", "Initial Load Performance"},
    {AuditCategory::Interactivity, "Interactivity", "Interactivity Performance"},
    {AuditCategory::Runtime, "Runtime", "Runtime Performance"},
    {AuditCategory::ResourceOptimization, "ResourceOptimization", "Resource Optimization"},
    {AuditCategory::NetworkOptimization, "NetworkOptimization", "Network Optimization"},
    {AuditCategory::VisualStability, "VisualStability", "Visual Stability"},
    {AuditCategory::SeoAccessibility, "SeoAccessibility", "SEO & Accessibility"},
    {AuditCategory::Uncategorized, "Uncategorized", "Uncategorized"},
};

std::string directory_of(const std::filesystem::path& file) {
  auto dir = file.parent_path();
  return dir.empty() ? std::string(".") : dir.string();
}

}  // namespace

DisplayMode display_mode_from_string(std::string_view raw) {
  if (raw == "binary") return DisplayMode::Binary;
  if (raw == "numeric") return DisplayMode::Numeric;
  if (raw == "informative") return DisplayMode::Informative;
  if (raw == "notApplicable") return DisplayMode::NotApplicable;
  if (raw == "manual") return DisplayMode::Manual;
  if (raw == "error") return DisplayMode::Error;
  if (raw == "metricSavings") return DisplayMode::MetricSavings;
  return DisplayMode::Other;
}

const AuditRecord* AuditReport::find(std::string_view id) const {
  for (const auto& a : audits) {
    if (a.id == id) return &a;
  }
  return nullptr;
}

AuditReport parse_report(std::string_view json_text, std::string page_id, std::optional<std::string> model_id) {
  Json json;
  try {
    json = Json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ReportParse, std::string("report is not JSON: ") + e.what());
  }
  if (!json.is_object() || !json.contains("audits") || !json["audits"].is_object()) {
    throw Error(ErrorCode::ReportParse, "report has no audits object");
  }
  AuditReport report;
  report.page_id = std::move(page_id);
  report.model_id = std::move(model_id);
  report.tool_version = json.value("lighthouseVersion", "");
  report.captured_at = json.value("fetchTime", "");
  if (auto cats = json.find("categories"); cats != json.end() && cats->is_object()) {
    if (auto perf = cats->find("performance"); perf != cats->end() && perf->is_object()) {
      if (auto score = perf->find("score"); score != perf->end() && score->is_number()) {
        report.lighthouse_score = score->get<double>() * 100.0;
      }
    }
  }

  auto spans = details_spans(json_text);
  for (const auto& [key, value] : json["audits"].items()) {
    if (!value.is_object()) throw Error(ErrorCode::ReportParse, "audit '" + key + "' is not an object");
    AuditRecord audit;
    audit.id = value.value("id", key);
    if (audit.id.empty()) throw Error(ErrorCode::ReportParse, "audit with an empty id");
    audit.title = optional_string(value, "title").value_or("");
    audit.description = optional_string(value, "description").value_or("");
    audit.mode_raw = optional_string(value, "scoreDisplayMode").value_or("");
    audit.mode = display_mode_from_string(audit.mode_raw);
    if (auto it = value.find("score"); it != value.end() && it->is_number()) audit.score = it->get<double>();
    if ((audit.mode == DisplayMode::Binary || audit.mode == DisplayMode::Numeric) && !audit.score) {
      throw Error(ErrorCode::ReportParse, "audit '" + audit.id + "' is " + audit.mode_raw + " but has no score");
    }
    audit.display_value = optional_string(value, "displayValue");
    if (auto it = spans.find(key); it != spans.end()) audit.details_raw = it->second;
    report.audits.push_back(std::move(audit));
  }
  return report;
}

Json report_to_json(const AuditReport& report) {
  Json out;
  out["page_id"] = report.page_id;
  out["variant"] = report.variant();
  out["tool_version"] = report.tool_version;
  out["captured_at"] = report.captured_at;
  out["lighthouse_score"] = report.lighthouse_score ? Json(*report.lighthouse_score) : Json();
  auto audits = Json::array();
  for (const auto& a : report.audits) {
    Json j;
    j["id"] = a.id;
    j["title"] = a.title;
    j["description"] = a.description;
    j["score"] = a.score ? Json(*a.score) : Json();
    j["score_display_mode"] = a.mode_raw;
    j["display_value"] = a.display_value ? Json(*a.display_value) : Json();
    j["actionable"] = is_actionable(a);
    j["details"] = a.details_raw ? Json::parse(*a.details_raw) : Json();
    audits.push_back(std::move(j));
  }
  out["audits"] = std::move(audits);
  return out;
}

bool is_actionable(const AuditRecord& audit) {
  switch (audit.mode) {
    case DisplayMode::NotApplicable:
    case DisplayMode::Manual:
    case DisplayMode::Informative: return false;
    case DisplayMode::Binary: return !(audit.score && *audit.score == 1.0);
    default: return true;
  }
}

std::vector<AuditRecord> filter_actionable(const std::vector<AuditRecord>& audits) {
  std::vector<AuditRecord> kept;
  for (const auto& a : audits) {
    if (is_actionable(a)) kept.push_back(a);
  }
  return kept;
}

std::vector<AuditRecord> filter_actionable(const AuditReport& report) { return filter_actionable(report.audits); }

std::string_view to_string(AuditCategory category) {
  for (const auto& n : kCategoryNames) {
    if (n.category == category) return n.key;
  }
  return "Uncategorized";
}

std::string_view display_name(AuditCategory category) {
  for (const auto& n : kCategoryNames) {
    if (n.category == category) return n.display;
  }
  return "Uncategorized";
}

AuditCategory category_from_string(std::string_view name) {
  for (const auto& n : kCategoryNames) {
    if (n.key == name || n.display == name) return n.category;
  }
  throw Error(ErrorCode::ConfigError, "unknown audit category '" + std::string(name) + "'");
}

CategoryMap CategoryMap::seeded() {
  CategoryMap map;
  for (const auto& e : kSeed) map.assign(e.id, e.category);
  return map;
}

CategoryMap CategoryMap::from_json(const Json& json) {
  if (!json.is_object()) throw Error(ErrorCode::ConfigError, "category map must be an object of id -> category");
  CategoryMap map;
  for (const auto& [id, category] : json.items()) {
    if (!category.is_string()) throw Error(ErrorCode::ConfigError, "category for '" + id + "' is not a string");
    map.assign(id, category_from_string(category.get<std::string>()));
  }
  return map;
}

CategoryMap CategoryMap::load(const std::filesystem::path& path) {
  try {
    return from_json(Json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string() + ": " + e.what());
  }
}

Json CategoryMap::to_json() const {
  Json out = Json::object();
  for (const auto& id : order_) out[id] = to_string(map_.at(id));
  return out;
}

void CategoryMap::assign(std::string id, AuditCategory category) {
  auto [it, inserted] = map_.insert_or_assign(id, category);
  if (inserted) order_.push_back(std::move(id));
}

AuditCategory CategoryMap::categorize(std::string_view audit_id) const {
  auto it = map_.find(audit_id);
  if (it != map_.end()) return it->second;
  static std::mutex warned_mutex;
  static std::set<std::string, std::less<>> warned;
  std::lock_guard lock(warned_mutex);
  if (warned.insert(std::string(audit_id)).second) {
    spdlog::warn("audit '{}' has no category; counting it as Uncategorized", audit_id);
  }
  return AuditCategory::Uncategorized;
}

std::vector<std::string> CategoryMap::members(AuditCategory category) const {
  std::vector<std::string> out;
  for (const auto& id : order_) {
    if (map_.at(id) == category) out.push_back(id);
  }
  return out;
}

AuditCategory categorize(std::string_view audit_id, const CategoryMap& map) { return map.categorize(audit_id); }

std::filesystem::path resolve_auditor(const AuditRunConfig& config) {
  if (const char* env = std::getenv("DOMREMEDY_AUDITOR"); env && *env) return env;
  return config.auditor;
}

std::vector<std::string> auditor_argv(const std::filesystem::path& auditor, const std::string& url,
                                      const AuditRunConfig& config) {
  std::vector<std::string> argv = {
      auditor.string(),
      url,
      "--output=json",
      "--output-path=stdout",
      "--quiet",
      "--chrome-flags=--headless --no-sandbox --disable-gpu",
  };
  argv.insert(argv.end(), config.extra_args.begin(), config.extra_args.end());
  return argv;
}

AuditResult run_audit(const AuditTarget& target, const AuditRunConfig& config) {
  auto auditor = resolve_auditor(config);
  if (auditor.has_parent_path() && !std::filesystem::exists(auditor)) {
    throw Error(ErrorCode::AuditorNotFound, auditor.string());
  }

  std::unique_ptr<httplib::Server> server;
  std::thread server_thread;
  std::string url;
  if (target.html_file) {
    auto html = std::make_shared<std::string>(read_file(*target.html_file));
    server = std::make_unique<httplib::Server>();
    server->Get("/", [html](const httplib::Request&, httplib::Response& res) {
      res.set_content(*html, "text/html; charset=utf-8");
    });
    server->set_mount_point("/", directory_of(*target.html_file));
    int port = server->bind_to_any_port("127.0.0.1");
    if (port <= 0) throw Error(ErrorCode::Io, "cannot bind a loopback port for " + target.html_file->string());
    server_thread = std::thread([&] { server->listen_after_bind(); });
    url = "http://127.0.0.1:" + std::to_string(port) + "/";
  } else if (target.url) {
    url = *target.url;
  } else {
    throw Error(ErrorCode::ConfigError, "audit target for " + target.page_id + " has neither a file nor a URL");
  }

  auto stop_server = [&] {
    if (server) {
      server->stop();
      if (server_thread.joinable()) server_thread.join();
    }
  };

  ProcessResult proc;
  try {
    proc = run_process(auditor_argv(auditor, url, config), config.timeout);
  } catch (...) {
    stop_server();
    throw;
  }
  stop_server();

  if (proc.timed_out) {
    throw Error(ErrorCode::Timeout, "auditor exceeded " + std::to_string(config.timeout.count()) + " s on " + url);
  }
  if (proc.exit_code == 127 && proc.out.empty()) throw Error(ErrorCode::AuditorNotFound, auditor.string());
  if (proc.exit_code != 0) {
    std::string tail = proc.err.size() > 2000 ? proc.err.substr(proc.err.size() - 2000) : proc.err;
    std::string how = proc.signal ? "signal " + std::to_string(proc.signal) : "exit " + std::to_string(proc.exit_code);
    throw Error(ErrorCode::AuditorCrashed, how + ": " + trim(tail));
  }
  AuditResult result{parse_report(proc.out, target.page_id, target.model_id), std::move(proc.out)};
  return result;
}

AuditResult ReplayAuditor::audit(const AuditTarget& target) {
  auto original = fixtures_ / (target.page_id + ".json");
  if (target.model_id) {
    auto recorded = fixtures_ / (target.page_id + "." + *target.model_id + ".json");
    if (std::filesystem::exists(recorded)) {
      std::string raw = read_file(recorded);
      return {parse_report(raw, target.page_id, target.model_id), raw};
    }
    if (!target.html_file || !target.original_html) {
      throw Error(ErrorCode::FixtureMissing, recorded.string());
    }
    auto modified_doc = parse_html(read_file(*target.html_file));
    auto original_doc = parse_html(read_file(*target.original_html));
    if (!tree_equal(modified_doc.root, original_doc.root)) {
      throw Error(ErrorCode::FixtureMissing, recorded.string() + " (page differs from the original)");
    }
  }
  if (!std::filesystem::exists(original)) throw Error(ErrorCode::FixtureMissing, original.string());
  std::string raw = read_file(original);
  return {parse_report(raw, target.page_id, target.model_id), raw};
}

std::vector<AuditOutcome> run_audit_queue(Auditor& auditor, const std::vector<AuditTarget>& targets,
                                          std::size_t parallelism) {
  std::vector<AuditOutcome> outcomes(targets.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < targets.size(); i = next++) {
      try {
        outcomes[i].result = auditor.audit(targets[i]);
      } catch (const std::exception& e) {
        outcomes[i].error = e.what();
      }
    }
  };
  std::size_t workers = std::max<std::size_t>(1, std::min(parallelism, targets.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return outcomes;
}

}  // namespace domremedy
