#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace domremedy {

enum class DisplayMode { Binary, Numeric, Informative, NotApplicable, Manual, Error, MetricSavings, Other };

DisplayMode display_mode_from_string(std::string_view raw);

struct AuditRecord {
  std::string id;
  std::string title;
  std::string description;
  std::optional<double> score;
  DisplayMode mode = DisplayMode::Other;
  std::string mode_raw;  // as written in the report, kept for unknown modes
  std::optional<std::string> display_value;
  // The report's "details" value, byte for byte as it appeared in the file.
  std::optional<std::string> details_raw;
};

struct AuditReport {
  std::string page_id;
  std::optional<std::string> model_id;  // empty for the original page
  std::vector<AuditRecord> audits;
  std::optional<double> lighthouse_score;  // performance category, 0-100
  std::string captured_at;
  std::string tool_version;

  std::string variant() const { return model_id ? *model_id : "original"; }
  const AuditRecord* find(std::string_view id) const;
};

// Parses a Lighthouse JSON report. Audits keep the report's key order.
AuditReport parse_report(std::string_view json_text, std::string page_id,
                         std::optional<std::string> model_id = std::nullopt);

// Normalized form written beside the verbatim report.
nlohmann::ordered_json report_to_json(const AuditReport& report);

bool is_actionable(const AuditRecord& audit);
std::vector<AuditRecord> filter_actionable(const AuditReport& report);
std::vector<AuditRecord> filter_actionable(const std::vector<AuditRecord>& audits);

enum class AuditCategory {
  InitialLoad,
  Interactivity,
  Runtime,
  ResourceOptimization,
  NetworkOptimization,
  VisualStability,
  SeoAccessibility,
  Uncategorized,
};

inline constexpr AuditCategory kAllCategories[] = {
    AuditCategory::SeoAccessibility,     AuditCategory::NetworkOptimization, AuditCategory::InitialLoad,
    AuditCategory::VisualStability,      AuditCategory::Runtime,             AuditCategory::ResourceOptimization,
    AuditCategory::Interactivity,
};

std::string_view to_string(AuditCategory category);  // config key, e.g. "SeoAccessibility"
std::string_view display_name(AuditCategory category);  // e.g. "SEO & Accessibility"
AuditCategory category_from_string(std::string_view name);

class CategoryMap {
 public:
  // Default map covering 67 common audits.
  static CategoryMap seeded();
  static CategoryMap from_json(const nlohmann::ordered_json& json);
  static CategoryMap load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;

  void assign(std::string id, AuditCategory category);
  // Unknown ids fall into Uncategorized, with a warning logged once per id.
  AuditCategory categorize(std::string_view audit_id) const;
  std::vector<std::string> members(AuditCategory category) const;  // in insertion order
  std::size_t size() const { return order_.size(); }

 private:
  std::map<std::string, AuditCategory, std::less<>> map_;
  std::vector<std::string> order_;
};

AuditCategory categorize(std::string_view audit_id, const CategoryMap& map);

struct AuditRunConfig {
  std::filesystem::path auditor = "lighthouse";
  std::chrono::seconds timeout{180};
  std::vector<std::string> extra_args;
};

// DOMREMEDY_AUDITOR, when set, replaces config.auditor.
std::filesystem::path resolve_auditor(const AuditRunConfig& config);

// Exact argument vector handed to the auditor for `url`.
std::vector<std::string> auditor_argv(const std::filesystem::path& auditor, const std::string& url,
                                      const AuditRunConfig& config);

struct AuditTarget {
  std::string page_id;
  std::optional<std::string> model_id;
  // A local HTML file is served over loopback; otherwise `url` is audited as is.
  std::optional<std::filesystem::path> html_file;
  std::optional<std::string> url;
  // Original page, used by the replay auditor to recognize unchanged pages.
  std::optional<std::filesystem::path> original_html;
};

struct AuditResult {
  AuditReport report;
  std::string raw_json;  // exactly as produced, for storing verbatim
};

AuditResult run_audit(const AuditTarget& target, const AuditRunConfig& config);

class Auditor {
 public:
  virtual ~Auditor() = default;
  virtual AuditResult audit(const AuditTarget& target) = 0;
  virtual std::string name() const = 0;
};

class LighthouseAuditor : public Auditor {
 public:
  explicit LighthouseAuditor(AuditRunConfig config) : config_(std::move(config)) {}
  AuditResult audit(const AuditTarget& target) override { return run_audit(target, config_); }
  std::string name() const override { return "lighthouse"; }

 private:
  AuditRunConfig config_;
};

// Serves recorded reports from a directory: <page_id>.json for the original and
// <page_id>.<model_id>.json for a modified variant. A modified page without a
// recording whose DOM equals the original page gets the original's report.
class ReplayAuditor : public Auditor {
 public:
  explicit ReplayAuditor(std::filesystem::path fixtures) : fixtures_(std::move(fixtures)) {}
  AuditResult audit(const AuditTarget& target) override;
  std::string name() const override { return "replay"; }

 private:
  std::filesystem::path fixtures_;
};

struct AuditOutcome {
  std::optional<AuditResult> result;
  std::string error;
};

// Runs targets through `auditor` with at most `parallelism` audits in flight.
// Results come back in target order; failures do not stop the queue.
std::vector<AuditOutcome> run_audit_queue(Auditor& auditor, const std::vector<AuditTarget>& targets,
                                          std::size_t parallelism = 1);

}  // namespace domremedy
