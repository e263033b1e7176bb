#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "domremedy/audit.hpp"
#include "domremedy/diff.hpp"
#include "json.hpp"

namespace domremedy {

// UniquePages counts a page once per audit; PerIncidence counts every
// actionable occurrence, so a ratio can exceed 1.
enum class CountingMode { UniquePages, PerIncidence };
enum class AggregationMode { PooledCounts, MeanOfAuditPct };

std::string_view to_string(CountingMode mode);
std::string_view to_string(AggregationMode mode);
CountingMode counting_mode_from_string(std::string_view name);
AggregationMode aggregation_mode_from_string(std::string_view name);

std::size_t incidence_count(std::string_view audit_id, std::span<const AuditReport> reports,
                            CountingMode mode = CountingMode::UniquePages);
// Pages are the distinct page ids among `reports`.
double air(std::string_view audit_id, std::span<const AuditReport> reports,
           CountingMode mode = CountingMode::UniquePages);

// (modified - original) / original * 100; throws UndefinedBaseline for original 0.
double pct_change_air(double original, double modified);

// Half away from zero, to `places` decimals.
double round_to(double value, int places);
// Two-decimal rendering with negative zero printed as 0.00.
std::string format_fixed2(double value);

struct IncidenceRow {
  std::string audit_id;
  std::size_t original_count = 0;
  std::size_t modified_count = 0;
  double original_air = 0;
  double modified_air = 0;
  std::optional<double> pct_change;
};

struct IncidenceTable {
  std::size_t total_pages = 0;
  CountingMode mode = CountingMode::UniquePages;
  std::vector<IncidenceRow> rows;

  static IncidenceTable from_counts(std::size_t total_pages,
                                    const std::vector<std::tuple<std::string, std::size_t, std::size_t>>& counts,
                                    CountingMode mode = CountingMode::UniquePages);
  const IncidenceRow* find(std::string_view audit_id) const;
};

// Rows for every audit that is actionable on either side, ordered by
// category map order and then by id.
IncidenceTable build_incidence_table(std::span<const AuditReport> original, std::span<const AuditReport> modified,
                                     const CategoryMap& map, CountingMode mode = CountingMode::UniquePages);

struct CategoryRow {
  AuditCategory category = AuditCategory::Uncategorized;
  std::size_t original_total = 0;
  std::size_t modified_total = 0;
  std::optional<double> pct_change;
};

struct CategoryRollup {
  AggregationMode mode = AggregationMode::PooledCounts;
  std::vector<CategoryRow> rows;  // only categories with at least one audit row

  const CategoryRow* find(AuditCategory category) const;
};

CategoryRollup category_rollup(const IncidenceTable& table, const CategoryMap& map,
                               AggregationMode mode = AggregationMode::PooledCounts);

// Pearson correlation of average ranks. Throws DegenerateInput for unequal
// lengths, fewer than two values, or a constant vector.
double spearman_rho(std::span<const double> x, std::span<const double> y);
std::vector<double> average_ranks(std::span<const double> values);

struct ModelRun {
  std::string model_id;
  IncidenceTable incidence;
  CategoryRollup rollup;
  std::vector<ChangeSet> changes;  // one per page
  std::size_t rejected_chunks = 0;
  std::size_t failed_pages = 0;
};

struct RunReport {
  std::string prompt_template_hash;
  std::map<std::string, std::string> tool_versions;
  CountingMode counting_mode = CountingMode::UniquePages;
  AggregationMode aggregation_mode = AggregationMode::PooledCounts;
  MetricsAggregation change_aggregation = MetricsAggregation::Pooled;
  std::size_t total_pages = 0;
  std::vector<std::string> pages;
  std::vector<ModelRun> models;
};

nlohmann::ordered_json run_report_to_json(const RunReport& run);

enum class ReportFormat { Csv, Markdown };
ReportFormat report_format_from_string(std::string_view name);

// Per-model audit tables, then the category by model matrix, then the change
// summary by model. Deterministic for a given run.
std::string emit_report(const RunReport& run, ReportFormat format, const CategoryMap& map);

}  // namespace domremedy
