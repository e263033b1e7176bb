#include <random>

#include <gtest/gtest.h>

#include "domremedy/error.hpp"
#include "domremedy/metrics.hpp"
#include "domremedy/util.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "test_paths.hpp"

using namespace domremedy;

namespace {

AuditRecord record(std::string id, DisplayMode mode, std::optional<double> score) {
  AuditRecord r;
  r.id = std::move(id);
  r.mode = mode;
  r.score = score;
  return r;
}

AuditReport report(std::string page, std::vector<AuditRecord> audits) {
  AuditReport r;
  r.page_id = std::move(page);
  r.audits = std::move(audits);
  return r;
}

}  // namespace

TEST(Incidence, CountsActionableAuditsPerPage) {
  std::vector<AuditReport> reports = {
      report("a", {record("x", DisplayMode::Binary, 0), record("y", DisplayMode::Numeric, 0.5)}),
      report("b", {record("x", DisplayMode::Binary, 1), record("y", DisplayMode::Numeric, 0.2)}),
      report("c", {record("x", DisplayMode::Binary, 0), record("x", DisplayMode::Binary, 0)}),
  };
  EXPECT_EQ(incidence_count("x", reports), 2u);
  EXPECT_EQ(incidence_count("x", reports, CountingMode::PerIncidence), 3u);
  EXPECT_DOUBLE_EQ(air("y", reports), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(air("x", reports, CountingMode::PerIncidence), 1.0);
}

TEST(Incidence, PctChange) {
  EXPECT_DOUBLE_EQ(pct_change_air(0.5, 0.25), -50.0);
  EXPECT_EQ(format_fixed2(pct_change_air(14.0 / 15, 25.0 / 15)), "78.57");
  try {
    pct_change_air(0, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UndefinedBaseline);
  }
}

TEST(Incidence, RoundingAndFormatting) {
  EXPECT_DOUBLE_EQ(round_to(0.125, 2), 0.13);
  EXPECT_DOUBLE_EQ(round_to(-0.125, 2), -0.13);
  EXPECT_DOUBLE_EQ(round_to(2.675, 2), 2.68);
  EXPECT_EQ(format_fixed2(-0.0), "0.00");
  EXPECT_EQ(format_fixed2(-0.001), "0.00");
  EXPECT_EQ(format_fixed2(-80), "-80.00");
  EXPECT_EQ(format_fixed2(0.125), "0.13");
  EXPECT_EQ(format_fixed2(-0.125), "-0.13");
}

TEST(Incidence, TableAndRollup) {
  std::vector<AuditReport> before = {
      report("a", {record("html-has-lang", DisplayMode::Binary, 0), record("first-contentful-paint", DisplayMode::Numeric, 0.4)}),
      report("b", {record("html-has-lang", DisplayMode::Binary, 0)}),
  };
  std::vector<AuditReport> after = {
      report("a", {record("first-contentful-paint", DisplayMode::Numeric, 0.4)}),
      report("b", {record("html-has-lang", DisplayMode::Binary, 1)}),
  };
  CategoryMap map = CategoryMap::load(testpaths::kData / "audit_categories.json");
  IncidenceTable t = build_incidence_table(before, after, map);
  ASSERT_EQ(t.rows.size(), 2u);
  const IncidenceRow* lang = t.find("html-has-lang");
  ASSERT_NE(lang, nullptr);
  EXPECT_EQ(lang->original_count, 2u);
  EXPECT_EQ(lang->modified_count, 0u);
  EXPECT_EQ(format_fixed2(*lang->pct_change), "-100.00");
  CategoryRollup r = category_rollup(t, map);
  const CategoryRow* seo = r.find(AuditCategory::SeoAccessibility);
  ASSERT_NE(seo, nullptr);
  EXPECT_EQ(format_fixed2(*seo->pct_change), "-100.00");
  EXPECT_EQ(format_fixed2(*r.find(AuditCategory::InitialLoad)->pct_change), "0.00");
}

TEST(Incidence, RowWithoutBaselineHasNoPct) {
  IncidenceTable t = IncidenceTable::from_counts(10, {{"x", 0, 3}});
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_FALSE(t.rows[0].pct_change);
}

TEST(Spearman, MatchesNaiveOracle) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 300; ++i) {
    std::size_t n = 3 + i % 40;
    std::vector<double> x(n);
    std::vector<double> y(n);
    for (std::size_t k = 0; k < n; ++k) {
      x[k] = static_cast<double>(rng() % 7);
      y[k] = static_cast<double>(rng() % 1000) / 7.0;
    }
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; })) continue;
    EXPECT_NEAR(spearman_rho(x, y), oracle::naive_spearman(x, y), 1e-12);
  }
}

TEST(Spearman, PerfectAndReversed) {
  std::vector<double> a{1, 2, 3, 4};
  std::vector<double> b{10, 20, 30, 40};
  std::vector<double> c{4, 3, 2, 1};
  EXPECT_DOUBLE_EQ(spearman_rho(a, b), 1.0);
  EXPECT_DOUBLE_EQ(spearman_rho(a, c), -1.0);
}

TEST(Spearman, AverageRanksForTies) {
  std::vector<double> v{10, 20, 10, 30};
  EXPECT_EQ(average_ranks(v), (std::vector<double>{1.5, 3, 1.5, 4}));
}

TEST(Spearman, DegenerateInputs) {
  auto code = [](std::vector<double> x, std::vector<double> y) {
    try {
      spearman_rho(x, y);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::Io;
  };
  EXPECT_EQ(code({1}, {2}), ErrorCode::DegenerateInput);
  EXPECT_EQ(code({1, 2}, {1, 2, 3}), ErrorCode::DegenerateInput);
  EXPECT_EQ(code({1, 1, 1}, {1, 2, 3}), ErrorCode::DegenerateInput);
}

TEST(Spearman, FixturePair) {
  auto j = nlohmann::json::parse(read_file(testpaths::kFixtures / "reference" / "spearman_pair.json"));
  auto x = j["x"].get<std::vector<double>>();
  auto y = j["y"].get<std::vector<double>>();
  EXPECT_NEAR(spearman_rho(x, y), -0.96, 0.005);
}

TEST(Report, EmitsBothFormatsDeterministically) {
  RunReport run;
  run.total_pages = 2;
  run.pages = {"a", "b"};
  ModelRun m;
  m.model_id = "model";
  m.incidence = IncidenceTable::from_counts(2, {{"html-has-lang", 2, 0}, {"first-contentful-paint", 1, 1}});
  CategoryMap map = CategoryMap::load(testpaths::kData / "audit_categories.json");
  m.rollup = category_rollup(m.incidence, map);
  ChangeSet cs;
  cs.counts[static_cast<std::size_t>(ChangeKind::ElementAdded)] = 3;
  m.changes = {cs};
  run.models = {m};
  std::string md = emit_report(run, ReportFormat::Markdown, map);
  std::string csv = emit_report(run, ReportFormat::Csv, map);
  EXPECT_EQ(md, emit_report(run, ReportFormat::Markdown, map));
  EXPECT_NE(md.find("-100.00"), std::string::npos);
  EXPECT_NE(md.find("SEO & Accessibility"), std::string::npos);
  EXPECT_NE(csv.find("html-has-lang"), std::string::npos);
  EXPECT_EQ(report_format_from_string("csv"), ReportFormat::Csv);
  EXPECT_EQ(run_report_to_json(run)["total_pages"], 2);
}
