// Acceptance suite: prints one PASS or FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <sys/wait.h>

#include "domremedy/audit.hpp"
#include "domremedy/chunking.hpp"
#include "domremedy/diff.hpp"
#include "domremedy/error.hpp"
#include "domremedy/html.hpp"
#include "domremedy/metrics.hpp"
#include "domremedy/ted.hpp"
#include "domremedy/util.hpp"
#include "domremedy/workspace.hpp"
#include "json.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace domremedy;
using Json = nlohmann::ordered_json;

namespace {

const fs::path kFixtures = DOMREMEDY_FIXTURES;
const fs::path kCli = DOMREMEDY_CLI;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<fs::path> fixture_pages() {
  std::vector<fs::path> pages;
  for (const auto& e : fs::directory_iterator(kFixtures / "pages")) {
    if (e.path().extension() == ".html") pages.push_back(e.path());
  }
  std::sort(pages.begin(), pages.end());
  return pages;
}

std::vector<std::string> fuzz_documents() {
  static std::vector<std::string> docs = [] {
    std::vector<std::string> out;
    std::mt19937_64 rng(20240611);
    for (int i = 0; i < 1000; ++i) {
      std::size_t elements = 5 + std::uniform_int_distribution<std::size_t>(0, 120)(rng);
      out.push_back(oracle::random_document(rng, elements));
    }
    return out;
  }();
  return docs;
}

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / fmt::format("domremedy-acceptance-{}-{}", ::getpid(), name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// True when the only interface in this network namespace is loopback.
bool network_isolated() {
  std::istringstream dev(read_file("/proc/self/net/dev"));
  std::string line;
  std::size_t interfaces = 0;
  for (int header = 0; header < 2 && std::getline(dev, line); ++header) {
  }
  while (std::getline(dev, line)) {
    std::string name = trim(line.substr(0, line.find(':')));
    if (!name.empty() && name != "lo") ++interfaces;
  }
  return interfaces == 0;
}

Outcome criterion_roundtrip() {
  auto t0 = Clock::now();
  const TokenEstimator est = default_estimator();
  std::size_t pages = 0;
  std::size_t runs = 0;
  for (const auto& path : fixture_pages()) {
    DomDocument doc = parse_html(read_file(path));
    for (std::size_t budget : {std::size_t{15000}, std::size_t{400}}) {
      RoundTripResult r = verify_roundtrip(doc, est, budget, budget / 15);
      ++runs;
      if (!r.ok) return {false, fmt::format("{} failed at budget {}", path.filename().string(), budget)};
    }
    ++pages;
  }
  std::mt19937_64 rng(7);
  std::size_t fuzz = 0;
  for (const auto& html : fuzz_documents()) {
    DomDocument doc = parse_html(html);
    std::size_t budget = 40 + std::uniform_int_distribution<std::size_t>(0, 400)(rng);
    RoundTripResult r = verify_roundtrip(doc, est, budget, budget / 10);
    if (!r.ok) return {false, fmt::format("fuzz document {} failed at budget {}", fuzz, budget)};
    if (r.ted && *r.ted != 0) return {false, fmt::format("fuzz document {} has TED {}", fuzz, *r.ted)};
    ++fuzz;
  }
  double elapsed = seconds_since(t0);
  bool fast = elapsed <= 60.0;
  return {pages >= 10 && fuzz == 1000 && fast,
          fmt::format("{} real pages ({} runs) and {} fuzz trees round-trip, {:.1f} s", pages, runs, fuzz, elapsed)};
}

Outcome criterion_budget() {
  const TokenEstimator est = default_estimator();
  std::size_t chunks = 0;
  std::size_t largest = 0;
  auto check = [&](const DomDocument& doc, const std::string& name) -> std::optional<std::string> {
    ChunkManifest m = plan_chunks(doc, est, 15000, 1000, ChunkIdSource(1, name));
    for (const auto& c : m.chunks) {
      std::size_t tokens = est.estimate(c.html);
      largest = std::max(largest, tokens);
      ++chunks;
      if (tokens > 15000) return fmt::format("{} chunk {} has {} tokens", name, c.ordinal, tokens);
    }
    return std::nullopt;
  };
  for (const auto& path : fixture_pages()) {
    if (auto err = check(parse_html(read_file(path)), path.filename().string())) return {false, *err};
  }
  std::size_t i = 0;
  for (const auto& html : fuzz_documents()) {
    if (auto err = check(parse_html(html), "fuzz " + std::to_string(i++))) return {false, *err};
  }
  return {true, fmt::format("{} chunks, largest {} tokens", chunks, largest)};
}

Outcome criterion_ted() {
  auto t0 = Clock::now();
  std::mt19937_64 rng(99);
  std::size_t nonzero = 0;
  for (int i = 0; i < 500; ++i) {
    std::size_t na = 1 + std::uniform_int_distribution<std::size_t>(0, 7)(rng);
    DomNode a = oracle::random_tree(rng, na);
    DomNode b;
    if (i % 2 == 0) {
      b = oracle::mutate(a, rng, 8);
    } else {
      b = oracle::random_tree(rng, 1 + std::uniform_int_distribution<std::size_t>(0, 7)(rng));
    }
    if (node_count(a) > 8 || node_count(b) > 8) return {false, "generator produced a tree over 8 nodes"};
    std::size_t fast = tree_edit_distance(a, b);
    std::size_t slow = oracle::brute_force_ted(a, b);
    if (fast != slow) return {false, fmt::format("pair {}: {} vs brute force {}", i, fast, slow)};
    nonzero += fast > 0;
  }
  double elapsed = seconds_since(t0);
  return {elapsed <= 30.0, fmt::format("500 pairs equal the brute force ({} non-zero), {:.2f} s", nonzero, elapsed)};
}

Outcome criterion_filter() {
  AuditReport report = parse_report(read_file(kFixtures / "reports" / "display_modes.json"), "modes");
  std::set<std::string> modes;
  for (const auto& a : report.audits) modes.insert(a.mode_raw + (a.mode == DisplayMode::Binary
                                                                      ? ":" + fmt::format("{}", a.score.value_or(-1))
                                                                      : ""));
  std::vector<std::string> kept;
  for (const auto& a : filter_actionable(report)) kept.push_back(a.id);
  std::vector<std::string> expected;
  for (const auto& a : report.audits) {
    if ((a.mode == DisplayMode::Binary && a.score && *a.score == 0.0) || a.mode == DisplayMode::Numeric) {
      expected.push_back(a.id);
    }
  }
  const std::vector<std::string> required = {"binary:0", "binary:1", "numeric", "manual", "informative",
                                             "notApplicable"};
  for (const auto& m : required) {
    if (!modes.count(m)) return {false, "fixture lacks mode " + m};
  }
  std::string list;
  for (const auto& id : kept) list += (list.empty() ? "" : ", ") + id;
  return {kept == expected && kept.size() == 4, "kept " + list};
}

Outcome criterion_incidence() {
  Json fx = Json::parse(read_file(kFixtures / "reference" / "incidence_counts.json"));
  std::vector<std::tuple<std::string, std::size_t, std::size_t>> counts;
  CategoryMap map;
  for (const auto& r : fx["rows"]) {
    counts.emplace_back(r["audit_id"], r["initial"], r["modified"]);
    map.assign(r["audit_id"], category_from_string(r["category"].get<std::string>()));
  }
  IncidenceTable table =
      IncidenceTable::from_counts(fx["total_pages"].get<std::size_t>(), counts, CountingMode::PerIncidence);
  std::vector<std::string> problems;
  std::size_t checked = 0;
  for (const auto& e : fx["expected"]) {
    const IncidenceRow* row = table.find(e["audit_id"].get<std::string>());
    std::string got;
    if (!row) {
      got = "missing";
    } else if (e["field"] == "original_air") {
      got = format_fixed2(row->original_air);
    } else {
      got = row->pct_change ? format_fixed2(*row->pct_change) : "n/a";
    }
    if (got != e["value"].get<std::string>()) problems.push_back(e["audit_id"].get<std::string>() + "=" + got);
    ++checked;
  }
  for (const auto& [category, value] : fx["expected_category_pct_change"].items()) {
    for (const auto& id : map.members(category_from_string(category))) {
      const IncidenceRow* row = table.find(id);
      std::string got = row && row->pct_change ? format_fixed2(*row->pct_change) : "n/a";
      if (got != value.get<std::string>()) problems.push_back(id + "=" + got);
      ++checked;
    }
  }
  const IncidenceRow* fcp = table.find("first-contentful-paint");
  const IncidenceRow* tbw = table.find("total-byte-weight");
  const IncidenceRow* lcp = table.find("largest-contentful-paint");
  std::string detail = fmt::format("{} values checked; FCP IR {}, total-byte-weight {}, LCP {}", checked,
                                   format_fixed2(fcp->original_air), format_fixed2(*tbw->pct_change),
                                   format_fixed2(*lcp->pct_change));
  if (!problems.empty()) {
    detail += "; mismatches:";
    for (const auto& p : problems) detail += " " + p;
  }
  // The same values computed from the raw functions.
  bool direct = format_fixed2(pct_change_air(5.0 / 15, 1.0 / 15)) == "-80.00" &&
                format_fixed2(pct_change_air(14.0 / 15, 25.0 / 15)) == "78.57";
  return {problems.empty() && direct && checked >= 20, detail};
}

Outcome criterion_eatrr() {
  Json fx = Json::parse(read_file(kFixtures / "reference" / "change_counts.json"));
  std::string got;
  bool ok = fx["rows"].size() == 9;
  for (const auto& r : fx["rows"]) {
    ModificationMetrics m = modification_metrics(r["elements_added"], r["elements_removed"], r["values_attr"],
                                                 r["values_tag"], r["values_position"], r["values_text"]);
    std::string value = m.eatrr ? format_fixed2(round_to(*m.eatrr, 2)) : "n/a";
    ok = ok && value == r["expected_eatrr"].get<std::string>();
    got += (got.empty() ? "" : ", ") + value;
  }

  // PCD on constructed change sets must equal positions / all value changes.
  std::mt19937_64 rng(5);
  std::size_t pcd_sets = 0;
  for (int i = 0; i < 200; ++i) {
    ChangeSet cs;
    std::array<std::size_t, kChangeKindCount> want{};
    for (std::size_t k = 0; k < kChangeKindCount; ++k) {
      want[k] = std::uniform_int_distribution<std::size_t>(0, 6)(rng);
      for (std::size_t n = 0; n < want[k]; ++n) {
        Change c;
        c.kind = static_cast<ChangeKind>(k);
        c.path = {n};
        c.depth = 1;
        cs.changes.push_back(c);
      }
    }
    cs = changeset_from_json(changeset_to_json(cs));
    std::size_t values = want[static_cast<std::size_t>(ChangeKind::AttrValueChanged)] +
                         want[static_cast<std::size_t>(ChangeKind::TagChanged)] +
                         want[static_cast<std::size_t>(ChangeKind::PositionChanged)] +
                         want[static_cast<std::size_t>(ChangeKind::TextChanged)];
    ModificationMetrics m = modification_metrics(cs);
    if (values == 0) {
      ok = ok && !m.pcd;
    } else {
      double expected = static_cast<double>(want[static_cast<std::size_t>(ChangeKind::PositionChanged)]) /
                        static_cast<double>(values);
      ok = ok && m.pcd && *m.pcd == expected;
    }
    ++pcd_sets;
  }
  return {ok, fmt::format("EATRR {}; PCD formula exact on {} constructed change sets", got, pcd_sets)};
}

Outcome criterion_diff() {
  std::mt19937_64 rng(1234);
  std::size_t nonempty = 0;
  for (int i = 0; i < 500; ++i) {
    DomNode a = oracle::random_tree(rng, 1 + std::uniform_int_distribution<std::size_t>(0, 11)(rng));
    DomNode b = i % 3 == 2 ? oracle::random_tree(rng, 1 + std::uniform_int_distribution<std::size_t>(0, 11)(rng))
                           : oracle::mutate(a, rng, 12);
    if (node_count(a) > 12 || node_count(b) > 12) return {false, "generator produced a tree over 12 nodes"};
    ChangeSet cs = diff_trees(a, b);
    std::vector<oracle::OracleChange> expected = oracle::brute_force_diff(a, b);
    if (cs.counts != oracle::kind_counts(expected)) return {false, fmt::format("pair {}: counts differ", i)};
    std::vector<oracle::OracleChange> got;
    for (const auto& c : cs.changes) got.push_back({c.kind, format_path(c.path)});
    std::sort(got.begin(), got.end());
    std::sort(expected.begin(), expected.end());
    if (got != expected) return {false, fmt::format("pair {}: change locations differ", i)};
    if (!tree_equal(apply_changes(a, cs), b)) return {false, fmt::format("pair {}: changes do not rebuild", i)};
    nonempty += !cs.empty();
  }
  std::size_t identity_checks = 0;
  std::mt19937_64 rng2(77);
  for (int i = 0; i < 500; ++i) {
    DomNode t = oracle::random_tree(rng2, 1 + std::uniform_int_distribution<std::size_t>(0, 11)(rng2));
    if (!diff_trees(t, t).empty()) return {false, "diff(t, t) not empty on a random tree"};
    ++identity_checks;
  }
  for (const auto& html : fuzz_documents()) {
    DomDocument doc = parse_html(html);
    if (!diff_trees(doc.root, doc.root).empty()) return {false, "diff(t, t) not empty on a fuzz document"};
    ++identity_checks;
  }
  return {true, fmt::format("500 pairs match the exhaustive differ ({} non-empty); diff(t,t) empty on {} trees",
                            nonempty, identity_checks)};
}

Outcome criterion_closed_loop() {
  fs::path ws = scratch_dir("identity");
  PipelineConfig config = load_config(kFixtures / "replay" / "identity.json");
  config.workspace = ws;
  Pipeline pipeline(config, Workspace(ws), PipelineOptions{});
  PipelineOutcome out = pipeline.run();
  if (out.failures || !out.report) return {false, fmt::format("{} stage failures", out.failures)};
  const RunReport& report = *out.report;
  std::size_t changesets = 0;
  std::size_t rows = 0;
  bool ok = report.models.size() == 1 && report.total_pages == 3;
  for (const auto& m : report.models) {
    for (const auto& cs : m.changes) {
      ok = ok && cs.empty();
      ++changesets;
    }
    for (const auto& r : m.incidence.rows) {
      ok = ok && r.pct_change && format_fixed2(*r.pct_change) == "0.00";
      ++rows;
    }
    for (const auto& c : m.rollup.rows) ok = ok && c.pct_change && format_fixed2(*c.pct_change) == "0.00";
  }
  ok = ok && changesets == 3 && rows > 0;
  bool isolated = network_isolated();
  fs::remove_all(ws);
  return {ok && isolated, fmt::format("{} empty change sets, {} audit rows at 0.00 %, network {}", changesets, rows,
                                      isolated ? "disabled" : "ENABLED (run under unshare -n)")};
}

Outcome criterion_spearman() {
  std::mt19937_64 rng(31337);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    std::size_t n = 2 + std::uniform_int_distribution<std::size_t>(0, 60)(rng);
    std::vector<double> x(n);
    std::vector<double> y(n);
    bool ties = i % 2 == 0;
    for (std::size_t k = 0; k < n; ++k) {
      x[k] = ties ? std::uniform_int_distribution<int>(0, 5)(rng) : std::normal_distribution<double>()(rng);
      y[k] = ties ? std::uniform_int_distribution<int>(0, 5)(rng) : std::normal_distribution<double>()(rng);
    }
    double naive = 0;
    bool degenerate = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
                      std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    try {
      double rho = spearman_rho(x, y);
      if (degenerate) return {false, "constant vector accepted"};
      naive = oracle::naive_spearman(x, y);
      worst = std::max(worst, std::abs(rho - naive));
    } catch (const Error& e) {
      if (!degenerate || e.code() != ErrorCode::DegenerateInput) return {false, e.what()};
    }
  }
  Json fx = Json::parse(read_file(kFixtures / "reference" / "spearman_pair.json"));
  std::vector<double> x = fx["x"].get<std::vector<double>>();
  std::vector<double> y = fx["y"].get<std::vector<double>>();
  double rho = spearman_rho(x, y);
  bool fixture_ok = std::abs(rho - (-0.96)) <= 0.005 && std::abs(rho - oracle::naive_spearman(x, y)) <= 1e-12;
  return {worst <= 1e-12 && fixture_ok,
          fmt::format("max deviation {:.1e} over 1000 vectors; fixture rho {:.4f}", worst, rho)};
}

// Stdout goes to `out`; stderr goes to `out` with ".err" appended.
int run_cli_process(const std::vector<std::string>& args, const fs::path& out) {
  std::string cmd = "'" + kCli.string() + "'";
  for (const auto& a : args) cmd += " '" + a + "'";
  cmd += " > '" + out.string() + "' 2> '" + out.string() + ".err'";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path());
  }
  return files;
}

Outcome criterion_determinism() {
  fs::path base = scratch_dir("determinism");
  const std::string config = (kFixtures / "replay" / "scripted.json").string();
  std::vector<std::map<std::string, std::string>> snaps;
  std::vector<std::string> reports;
  for (const char* name : {"first", "second"}) {
    fs::path ws = base / name;
    int code = run_cli_process({"run", "--config", config, "--workspace", ws.string(), "--seed", "7"},
                               base / (std::string(name) + ".log"));
    if (code != 0) return {false, fmt::format("run {} exited with {}: {}", name, code,
                                              read_file(base / (std::string(name) + ".log.err")))};
    fs::path out = base / (std::string(name) + ".report.csv");
    code = run_cli_process({"report", "--workspace", ws.string(), "--format", "csv"}, out);
    if (code != 0) return {false, fmt::format("report {} exited with {}", name, code)};
    reports.push_back(read_file(out));
    snaps.push_back(snapshot(ws));
  }
  std::size_t differing = 0;
  std::string first_diff;
  for (const auto& [path, bytes] : snaps[0]) {
    auto it = snaps[1].find(path);
    if (it == snaps[1].end() || it->second != bytes) {
      if (first_diff.empty()) first_diff = path;
      ++differing;
    }
  }
  bool same_files = snaps[0].size() == snaps[1].size();
  std::size_t changes = 0;
  for (const auto& [path, bytes] : snaps[0]) {
    if (path.find("diffs/") != std::string::npos) changes += Json::parse(bytes)["changes"].size();
  }
  fs::remove_all(base);
  bool ok = same_files && differing == 0 && reports[0] == reports[1] && changes > 0;
  return {ok, fmt::format("{} files identical across two seeded runs, {} recorded changes, reports identical: {}{}",
                          snaps[0].size(), changes, reports[0] == reports[1] ? "yes" : "no",
                          first_diff.empty() ? "" : ", first difference " + first_diff)};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"chunk and reassemble round trip", criterion_roundtrip},
      {"chunk budget compliance", criterion_budget},
      {"tree edit distance oracle", criterion_ted},
      {"audit filtering", criterion_filter},
      {"incidence metric reproduction", criterion_incidence},
      {"element ratio reproduction", criterion_eatrr},
      {"diff oracle", criterion_diff},
      {"closed loop identity", criterion_closed_loop},
      {"spearman", criterion_spearman},
      {"seeded determinism", criterion_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << fmt::format("{} [{:>2}] {}: {}", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail)
              << std::endl;
  }
  std::cout << fmt::format("{} of {} criteria passed", criteria.size() - failed, criteria.size()) << std::endl;
  return failed == 0 ? 0 : 1;
}
