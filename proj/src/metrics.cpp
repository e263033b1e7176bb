#include "domremedy/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "domremedy/error.hpp"

namespace domremedy {

namespace {

using Json = nlohmann::ordered_json;

std::size_t distinct_pages(std::span<const AuditReport> reports) {
  std::set<std::string> pages;
  for (const auto& r : reports) pages.insert(r.page_id);
  return pages.size();
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string md_field(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += '\\';
    out += c;
  }
  return out;
}

std::string opt2(const std::optional<double>& v) { return v ? format_fixed2(*v) : "n/a"; }
std::string opt_int(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : "n/a"; }

class Table {
 public:
  Table(ReportFormat format, std::string& out) : format_(format), out_(out) {}

  void title(const std::string& text) {
    if (format_ == ReportFormat::Csv) {
      out_ += "# " + text + "\n";
    } else {
      out_ += "## " + text + "\n\n";
    }
  }

  // The first `text_columns` columns are left aligned, the rest numeric.
  void header(const std::vector<std::string>& cells, std::size_t text_columns) {
    row(cells);
    if (format_ == ReportFormat::Markdown) {
      out_ += "|";
      for (std::size_t i = 0; i < cells.size(); ++i) out_ += i < text_columns ? " --- |" : " ---: |";
      out_ += "\n";
    }
  }

  void row(const std::vector<std::string>& cells) {
    if (format_ == ReportFormat::Csv) {
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out_ += ',';
        out_ += csv_field(cells[i]);
      }
      out_ += "\n";
    } else {
      out_ += "|";
      for (const auto& c : cells) out_ += " " + md_field(c) + " |";
      out_ += "\n";
    }
  }

  void end() { out_ += "\n"; }

 private:
  ReportFormat format_;
  std::string& out_;
};

std::vector<AuditCategory> category_order() {
  std::vector<AuditCategory> order(std::begin(kAllCategories), std::end(kAllCategories));
  order.push_back(AuditCategory::Uncategorized);
  return order;
}

}  // namespace

std::string_view to_string(CountingMode mode) {
  return mode == CountingMode::UniquePages ? "unique_pages" : "per_incidence";
}

std::string_view to_string(AggregationMode mode) {
  return mode == AggregationMode::PooledCounts ? "pooled_counts" : "mean_of_audit_pct";
}

CountingMode counting_mode_from_string(std::string_view name) {
  if (name == "unique_pages") return CountingMode::UniquePages;
  if (name == "per_incidence") return CountingMode::PerIncidence;
  throw Error(ErrorCode::ConfigError, "unknown counting mode '" + std::string(name) + "'");
}

AggregationMode aggregation_mode_from_string(std::string_view name) {
  if (name == "pooled_counts") return AggregationMode::PooledCounts;
  if (name == "mean_of_audit_pct") return AggregationMode::MeanOfAuditPct;
  throw Error(ErrorCode::ConfigError, "unknown aggregation mode '" + std::string(name) + "'");
}

std::size_t incidence_count(std::string_view audit_id, std::span<const AuditReport> reports, CountingMode mode) {
  std::set<std::string> pages;
  std::size_t incidences = 0;
  for (const auto& report : reports) {
    for (const auto& audit : report.audits) {
      if (audit.id == audit_id && is_actionable(audit)) {
        pages.insert(report.page_id);
        ++incidences;
      }
    }
  }
  return mode == CountingMode::UniquePages ? pages.size() : incidences;
}

double air(std::string_view audit_id, std::span<const AuditReport> reports, CountingMode mode) {
  std::size_t total = distinct_pages(reports);
  if (total == 0) throw Error(ErrorCode::UndefinedBaseline, "no pages to compute an incidence ratio over");
  return static_cast<double>(incidence_count(audit_id, reports, mode)) / static_cast<double>(total);
}

double pct_change_air(double original, double modified) {
  if (original == 0.0) throw Error(ErrorCode::UndefinedBaseline, "original incidence is zero");
  return (modified - original) / original * 100.0;
}

double round_to(double value, int places) {
  double scale = std::pow(10.0, places);
  return std::round(value * scale) / scale;
}

std::string format_fixed2(double value) {
  double r = round_to(value, 2);
  if (r == 0.0) r = 0.0;  // drops the sign of -0.0
  return fmt::format("{:.2f}", r);
}

IncidenceTable IncidenceTable::from_counts(std::size_t total_pages,
                                           const std::vector<std::tuple<std::string, std::size_t, std::size_t>>& counts,
                                           CountingMode mode) {
  if (total_pages == 0) throw Error(ErrorCode::UndefinedBaseline, "total pages must be positive");
  IncidenceTable table;
  table.total_pages = total_pages;
  table.mode = mode;
  for (const auto& [id, original, modified] : counts) {
    IncidenceRow row;
    row.audit_id = id;
    row.original_count = original;
    row.modified_count = modified;
    row.original_air = static_cast<double>(original) / static_cast<double>(total_pages);
    row.modified_air = static_cast<double>(modified) / static_cast<double>(total_pages);
    if (original > 0) row.pct_change = pct_change_air(static_cast<double>(original), static_cast<double>(modified));
    table.rows.push_back(std::move(row));
  }
  return table;
}

const IncidenceRow* IncidenceTable::find(std::string_view audit_id) const {
  for (const auto& r : rows) {
    if (r.audit_id == audit_id) return &r;
  }
  return nullptr;
}

IncidenceTable build_incidence_table(std::span<const AuditReport> original, std::span<const AuditReport> modified,
                                     const CategoryMap& map, CountingMode mode) {
  std::set<std::string> seen;
  for (auto side : {original, modified}) {
    for (const auto& report : side) {
      for (const auto& audit : report.audits) {
        if (is_actionable(audit)) seen.insert(audit.id);
      }
    }
  }
  std::vector<std::string> ordered;
  for (AuditCategory category : kAllCategories) {
    for (const auto& id : map.members(category)) {
      if (seen.erase(id)) ordered.push_back(id);
    }
  }
  ordered.insert(ordered.end(), seen.begin(), seen.end());

  std::vector<std::tuple<std::string, std::size_t, std::size_t>> counts;
  for (const auto& id : ordered) {
    counts.emplace_back(id, incidence_count(id, original, mode), incidence_count(id, modified, mode));
  }
  std::size_t pages = std::max<std::size_t>(1, distinct_pages(original));
  return IncidenceTable::from_counts(pages, counts, mode);
}

const CategoryRow* CategoryRollup::find(AuditCategory category) const {
  for (const auto& r : rows) {
    if (r.category == category) return &r;
  }
  return nullptr;
}

CategoryRollup category_rollup(const IncidenceTable& table, const CategoryMap& map, AggregationMode mode) {
  CategoryRollup rollup;
  rollup.mode = mode;
  for (AuditCategory category : category_order()) {
    CategoryRow row;
    row.category = category;
    bool any = false;
    double pct_sum = 0;
    std::size_t pct_n = 0;
    for (const auto& r : table.rows) {
      if (map.categorize(r.audit_id) != category) continue;
      any = true;
      row.original_total += r.original_count;
      row.modified_total += r.modified_count;
      if (r.pct_change) {
        pct_sum += *r.pct_change;
        ++pct_n;
      }
    }
    if (!any) continue;
    if (mode == AggregationMode::PooledCounts) {
      if (row.original_total > 0) {
        row.pct_change = pct_change_air(static_cast<double>(row.original_total),
                                        static_cast<double>(row.modified_total));
      }
    } else if (pct_n > 0) {
      row.pct_change = pct_sum / static_cast<double>(pct_n);
    }
    rollup.rows.push_back(row);
  }
  return rollup;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::DegenerateInput, "vectors differ in length");
  if (x.size() < 2) throw Error(ErrorCode::DegenerateInput, "need at least two observations");
  for (auto v : {x, y}) {
    if (std::any_of(v.begin(), v.end(), [](double d) { return std::isnan(d); })) {
      throw Error(ErrorCode::DegenerateInput, "input contains NaN");
    }
    if (std::all_of(v.begin(), v.end(), [&](double d) { return d == v.front(); })) {
      throw Error(ErrorCode::DegenerateInput, "input is constant");
    }
  }
  auto rx = average_ranks(x);
  auto ry = average_ranks(y);
  double n = static_cast<double>(x.size());
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0;
  double sxx = 0;
  double syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    double dx = rx[i] - mx;
    double dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Json run_report_to_json(const RunReport& run) {
  Json out;
  out["prompt_template_hash"] = run.prompt_template_hash;
  Json tools = Json::object();
  for (const auto& [k, v] : run.tool_versions) tools[k] = v;
  out["tool_versions"] = std::move(tools);
  out["counting_mode"] = to_string(run.counting_mode);
  out["aggregation_mode"] = to_string(run.aggregation_mode);
  out["change_aggregation"] = to_string(run.change_aggregation);
  out["total_pages"] = run.total_pages;
  out["pages"] = run.pages;
  auto optd = [](const std::optional<double>& v) { return v ? Json(*v) : Json(); };
  auto opti = [](const std::optional<std::size_t>& v) { return v ? Json(*v) : Json(); };
  auto models = Json::array();
  for (const auto& m : run.models) {
    Json jm;
    jm["model_id"] = m.model_id;
    jm["failed_pages"] = m.failed_pages;
    jm["rejected_chunks"] = m.rejected_chunks;
    auto rows = Json::array();
    for (const auto& r : m.incidence.rows) {
      rows.push_back(Json{{"audit_id", r.audit_id},
                          {"original_count", r.original_count},
                          {"modified_count", r.modified_count},
                          {"original_air", r.original_air},
                          {"modified_air", r.modified_air},
                          {"pct_change", optd(r.pct_change)}});
    }
    jm["incidence"] = std::move(rows);
    auto cats = Json::array();
    for (const auto& c : m.rollup.rows) {
      cats.push_back(Json{{"category", to_string(c.category)},
                          {"original_total", c.original_total},
                          {"modified_total", c.modified_total},
                          {"pct_change", optd(c.pct_change)}});
    }
    jm["categories"] = std::move(cats);
    auto pooled = pool_changes(m.changes);
    auto metrics = aggregate_metrics(m.changes, run.change_aggregation);
    Json counts = Json::object();
    for (std::size_t k = 0; k < kChangeKindCount; ++k) {
      counts[std::string(to_string(static_cast<ChangeKind>(k)))] = pooled.counts[k];
    }
    jm["changes"] = Json{{"counts", counts},
                         {"depth", Json{{"min", opti(pooled.depth.min)},
                                        {"max", opti(pooled.depth.max)},
                                        {"median", opti(pooled.depth.median)}}},
                         {"eatrr", optd(metrics.eatrr)},
                         {"pcd", optd(metrics.pcd)}};
    models.push_back(std::move(jm));
  }
  out["models"] = std::move(models);
  return out;
}

ReportFormat report_format_from_string(std::string_view name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "markdown" || name == "md") return ReportFormat::Markdown;
  throw Error(ErrorCode::ConfigError, "unknown report format '" + std::string(name) + "'");
}

std::string emit_report(const RunReport& run, ReportFormat format, const CategoryMap& map) {
  std::string out;
  Table table(format, out);

  const std::vector<std::string> incidence_header = {"Category",      "Audit",          "Original IR", "Modified IR",
                                                     "Initial Count", "Modified Count", "% Change"};
  auto incidence = [&](const ModelRun* m) {
    std::string label = m ? m->model_id : "none";
    table.title(fmt::format("Audit incidence, model {}, counting {}, {} pages", label, to_string(run.counting_mode),
                            run.total_pages));
    table.header(incidence_header, 2);
    if (m) {
      for (const auto& r : m->incidence.rows) {
        table.row({std::string(display_name(map.categorize(r.audit_id))), r.audit_id, format_fixed2(r.original_air),
                   format_fixed2(r.modified_air), std::to_string(r.original_count), std::to_string(r.modified_count),
                   opt2(r.pct_change)});
      }
    }
    table.end();
  };
  if (run.models.empty()) incidence(nullptr);
  for (const auto& m : run.models) incidence(&m);

  table.title(fmt::format("Change in audit incidence by category (%), aggregation {}", to_string(run.aggregation_mode)));
  std::vector<std::string> header = {"Audit Category"};
  for (const auto& m : run.models) header.push_back(m.model_id);
  table.header(header, 1);
  for (AuditCategory category : category_order()) {
    bool present = std::any_of(run.models.begin(), run.models.end(),
                               [&](const ModelRun& m) { return m.rollup.find(category) != nullptr; });
    if (!present) continue;
    std::vector<std::string> row = {std::string(display_name(category))};
    for (const auto& m : run.models) {
      const CategoryRow* r = m.rollup.find(category);
      row.push_back(r ? opt2(r->pct_change) : "n/a");
    }
    table.row(row);
  }
  table.end();

  table.title(fmt::format("DOM change summary, ratios {}", to_string(run.change_aggregation)));
  table.header({"Model", "EATRR", "PCD", "Attributes Added", "Attributes Removed", "Elements Added",
                "Elements Removed", "Types Changed", "Depth Min", "Depth Max", "Depth Med", "Values Attr",
                "Values Tag", "Values Pos", "Values Text"},
               1);
  for (const auto& m : run.models) {
    auto pooled = pool_changes(m.changes);
    auto metrics = aggregate_metrics(m.changes, run.change_aggregation);
    auto n = [&](ChangeKind k) { return std::to_string(pooled.count(k)); };
    table.row({m.model_id, opt2(metrics.eatrr), opt2(metrics.pcd), n(ChangeKind::AttributeAdded),
               n(ChangeKind::AttributeRemoved), n(ChangeKind::ElementAdded), n(ChangeKind::ElementRemoved),
               n(ChangeKind::TypeChanged), opt_int(pooled.depth.min), opt_int(pooled.depth.max),
               opt_int(pooled.depth.median), n(ChangeKind::AttrValueChanged), n(ChangeKind::TagChanged),
               n(ChangeKind::PositionChanged), n(ChangeKind::TextChanged)});
  }
  table.end();
  return out;
}

}  // namespace domremedy
