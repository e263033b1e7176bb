#include <cstdlib>

#include <gtest/gtest.h>

#include "domremedy/audit.hpp"
#include "domremedy/error.hpp"
#include "domremedy/util.hpp"
#include "json.hpp"
#include "test_paths.hpp"

using namespace domremedy;
using Json = nlohmann::ordered_json;

namespace {

const std::filesystem::path kFake = testpaths::kFixtures / "fake_lighthouse.py";
const std::filesystem::path kPage = testpaths::kFixtures / "pages" / "npm-ping.html";

class ScopedEnv {
 public:
  ScopedEnv(const char* name, const std::string& value) : name_(name) { ::setenv(name, value.c_str(), 1); }
  ~ScopedEnv() { ::unsetenv(name_); }

 private:
  const char* name_;
};

AuditRunConfig fake_config(int timeout_s = 60) {
  AuditRunConfig config;
  config.auditor = kFake;
  config.timeout = std::chrono::seconds(timeout_s);
  return config;
}

AuditTarget url_target() {
  AuditTarget t;
  t.page_id = "npm-ping";
  t.url = kPage.string();
  return t;
}

ErrorCode audit_error(const AuditRunConfig& config) {
  try {
    run_audit(url_target(), config);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

}  // namespace

TEST(Audit, DisplayModesParse) {
  EXPECT_EQ(display_mode_from_string("binary"), DisplayMode::Binary);
  EXPECT_EQ(display_mode_from_string("numeric"), DisplayMode::Numeric);
  EXPECT_EQ(display_mode_from_string("notApplicable"), DisplayMode::NotApplicable);
  EXPECT_EQ(display_mode_from_string("manual"), DisplayMode::Manual);
  EXPECT_EQ(display_mode_from_string("informative"), DisplayMode::Informative);
  EXPECT_EQ(display_mode_from_string("somethingNew"), DisplayMode::Other);
}

TEST(Audit, FilterKeepsFailedBinaryAndNumeric) {
  AuditReport r = parse_report(read_file(testpaths::kFixtures / "reports" / "display_modes.json"), "p");
  std::vector<std::string> kept;
  for (const auto& a : filter_actionable(r)) kept.push_back(a.id);
  EXPECT_EQ(kept, (std::vector<std::string>{"html-has-lang", "first-contentful-paint", "largest-contentful-paint",
                                            "meta-description"}));
}

TEST(Audit, ReportKeepsKeyOrderAndDetailsBytes) {
  std::string text = R"({"lighthouseVersion":"12.2.0","fetchTime":"t","categories":{"performance":{"score":0.5}},
    "audits":{"zeta":{"id":"zeta","title":"Z","scoreDisplayMode":"binary","score":0,
      "details":{"b": 1,  "a":[1, 2]}},
    "alpha":{"id":"alpha","title":"A","scoreDisplayMode":"numeric","score":0.3,"displayValue":"1 s"}}})";
  AuditReport r = parse_report(text, "page");
  ASSERT_EQ(r.audits.size(), 2u);
  EXPECT_EQ(r.audits[0].id, "zeta");
  EXPECT_EQ(r.audits[1].id, "alpha");
  EXPECT_EQ(r.audits[0].details_raw.value_or(""), R"({"b": 1,  "a":[1, 2]})");
  EXPECT_EQ(r.audits[1].display_value.value_or(""), "1 s");
  EXPECT_EQ(r.tool_version, "12.2.0");
  ASSERT_TRUE(r.lighthouse_score);
  EXPECT_DOUBLE_EQ(*r.lighthouse_score, 50.0);
}

TEST(Audit, MalformedReportIsAParseError) {
  try {
    parse_report("{not json", "p");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ReportParse);
  }
}

TEST(Audit, CategoriesFromSeededAndFileMaps) {
  CategoryMap seeded = CategoryMap::seeded();
  EXPECT_EQ(seeded.size(), 67u);
  EXPECT_EQ(seeded.categorize("first-contentful-paint"), AuditCategory::InitialLoad);
  EXPECT_EQ(seeded.categorize("no-such-audit"), AuditCategory::Uncategorized);
  CategoryMap file = CategoryMap::load(testpaths::kData / "audit_categories.json");
  EXPECT_EQ(file.categorize("html-has-lang"), AuditCategory::SeoAccessibility);
  EXPECT_EQ(CategoryMap::from_json(file.to_json()).size(), file.size());
  EXPECT_EQ(category_from_string(to_string(AuditCategory::Runtime)), AuditCategory::Runtime);
  EXPECT_EQ(display_name(AuditCategory::SeoAccessibility), "SEO & Accessibility");
}

TEST(Audit, ArgvIsExact) {
  AuditRunConfig config = fake_config();
  config.extra_args = {"--only-categories=performance"};
  auto argv = auditor_argv(kFake, "http://x/", config);
  EXPECT_EQ(argv, (std::vector<std::string>{kFake.string(), "http://x/", "--output=json", "--output-path=stdout",
                                            "--quiet", "--chrome-flags=--headless --no-sandbox --disable-gpu",
                                            "--only-categories=performance"}));
}

TEST(Audit, RunsTheAuditorAndRecordsArgv) {
  auto dir = testpaths::scratch("argv");
  ScopedEnv env("FAKE_LIGHTHOUSE_ARGV", (dir / "argv.json").string());
  AuditResult result = run_audit(url_target(), fake_config());
  EXPECT_EQ(result.report.page_id, "npm-ping");
  EXPECT_FALSE(result.report.audits.empty());
  EXPECT_EQ(parse_report(result.raw_json, "npm-ping").audits.size(), result.report.audits.size());
  Json argv = Json::parse(read_file(dir / "argv.json"));
  EXPECT_EQ(argv.get<std::vector<std::string>>(), auditor_argv(kFake, kPage.string(), fake_config()));
  std::filesystem::remove_all(dir);
}

TEST(Audit, ServesLocalFilesOverLoopback) {
  AuditTarget t;
  t.page_id = "npm-ping";
  t.html_file = kPage;
  AuditResult result = run_audit(t, fake_config());
  EXPECT_FALSE(result.report.audits.empty());
}

TEST(Audit, EnvironmentOverridesTheAuditor) {
  ScopedEnv env("DOMREMEDY_AUDITOR", kFake.string());
  AuditRunConfig config = fake_config();
  config.auditor = "/nonexistent/lighthouse";
  EXPECT_EQ(resolve_auditor(config), kFake);
  EXPECT_FALSE(run_audit(url_target(), config).report.audits.empty());
}

TEST(Audit, MissingAuditor) {
  AuditRunConfig config = fake_config();
  config.auditor = "/nonexistent/lighthouse";
  EXPECT_EQ(audit_error(config), ErrorCode::AuditorNotFound);
  config.auditor = "domremedy-no-such-auditor-on-path";
  EXPECT_EQ(audit_error(config), ErrorCode::AuditorNotFound);
}

TEST(Audit, CrashSignalGarbageAndHang) {
  {
    ScopedEnv env("FAKE_LIGHTHOUSE_MODE", "crash");
    EXPECT_EQ(audit_error(fake_config()), ErrorCode::AuditorCrashed);
  }
  {
    ScopedEnv env("FAKE_LIGHTHOUSE_MODE", "signal");
    EXPECT_EQ(audit_error(fake_config()), ErrorCode::AuditorCrashed);
  }
  {
    ScopedEnv env("FAKE_LIGHTHOUSE_MODE", "garbage");
    EXPECT_EQ(audit_error(fake_config()), ErrorCode::ReportParse);
  }
  {
    ScopedEnv env("FAKE_LIGHTHOUSE_MODE", "hang");
    auto t0 = std::chrono::steady_clock::now();
    EXPECT_EQ(audit_error(fake_config(1)), ErrorCode::Timeout);
    EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(10));
  }
}

TEST(Audit, QueueIsolatesFailuresAndKeepsOrder) {
  ReplayAuditor auditor(testpaths::kFixtures / "replay" / "lighthouse");
  std::vector<AuditTarget> targets(3);
  targets[0].page_id = "npm-ping";
  targets[1].page_id = "no-such-page";
  targets[2].page_id = "npm-help";
  auto out = run_audit_queue(auditor, targets, 2);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_TRUE(out[0].result);
  EXPECT_FALSE(out[1].result);
  EXPECT_FALSE(out[1].error.empty());
  ASSERT_TRUE(out[2].result);
  EXPECT_EQ(out[2].result->report.page_id, "npm-help");
}

TEST(Audit, ReplayUsesOriginalReportForUnchangedPages) {
  ReplayAuditor auditor(testpaths::kFixtures / "replay" / "lighthouse");
  AuditTarget t;
  t.page_id = "npm-ping";
  t.model_id = "identity";
  t.html_file = kPage;
  t.original_html = kPage;
  AuditResult r = auditor.audit(t);
  EXPECT_EQ(r.report.model_id.value_or(""), "identity");
  EXPECT_EQ(r.raw_json, read_file(testpaths::kFixtures / "replay" / "lighthouse" / "npm-ping.json"));
}
