#include <atomic>
#include <condition_variable>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "domremedy/diff.hpp"
#include "domremedy/error.hpp"
#include "domremedy/html.hpp"
#include "domremedy/workspace.hpp"

namespace domremedy {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

constexpr const char* kFrozenTimestamp = "1970-01-01T00:00:00Z";

Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ReportParse, "malformed " + path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const Json& json) { write_file_atomic(path, json.dump(2) + "\n"); }

void remove_tree(const fs::path& path) {
  std::error_code ec;
  fs::remove_all(path, ec);
}

template <class F>
void parallel_for(std::size_t count, std::size_t parallelism, F&& body) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) body(i);
  };
  std::size_t workers = std::max<std::size_t>(1, std::min(parallelism, count));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

}  // namespace

class AuditGate {
 public:
  explicit AuditGate(std::size_t slots) : free_(std::max<std::size_t>(1, slots)) {}

  void acquire() {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return free_ > 0; });
    --free_;
  }
  void release() {
    {
      std::lock_guard lock(mutex_);
      ++free_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::size_t free_;
};

namespace {

struct GateLock {
  explicit GateLock(AuditGate& gate) : gate(gate) { gate.acquire(); }
  ~GateLock() { gate.release(); }
  AuditGate& gate;
};

}  // namespace

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Fetch: return "fetch";
    case Stage::Chunk: return "chunk";
    case Stage::AuditOriginal: return "audit-original";
    case Stage::Remediate: return "remediate";
    case Stage::Reassemble: return "reassemble";
    case Stage::AuditModified: return "audit-modified";
    case Stage::Diff: return "diff";
    case Stage::Report: return "report";
  }
  return "unknown";
}

Pipeline::Pipeline(PipelineConfig config, Workspace workspace, PipelineOptions options)
    : config_(std::move(config)),
      ws_(std::move(workspace)),
      options_(std::move(options)),
      categories_(config_.category_map ? CategoryMap::load(*config_.category_map) : CategoryMap::seeded()),
      estimator_(estimator_by_name(config_.estimator)),
      audit_gate_(std::make_shared<AuditGate>(config_.audit_parallelism)),
      failed_mutex_(std::make_shared<std::mutex>()),
      event_mutex_(std::make_shared<std::mutex>()) {
  if (!config_.pages.empty()) {
    pages_ = domremedy::page_ids(config_.pages);
    for (std::size_t i = 0; i < pages_.size(); ++i) sources_[pages_[i]] = config_.pages[i];
  } else {
    pages_ = ws_.pages();
  }
  if (config_.auditor.mode == "replay") {
    auditor_ = std::make_unique<ReplayAuditor>(config_.auditor.fixtures);
  } else {
    auditor_ = std::make_unique<LighthouseAuditor>(
        AuditRunConfig{config_.auditor.path, config_.auditor.timeout, config_.auditor.extra_args});
  }
  for (const auto& filter : options_.model_filter) {
    if (std::find(config_.models.begin(), config_.models.end(), filter) == config_.models.end()) {
      throw Error(ErrorCode::ConfigError, "model '" + filter + "' is not configured");
    }
  }
  for (const auto& model : models()) backends_.emplace(model, make_backend(model));
}

std::vector<std::string> Pipeline::models() const {
  if (options_.model_filter.empty()) return config_.models;
  std::vector<std::string> out;
  for (const auto& m : config_.models) {
    if (std::find(options_.model_filter.begin(), options_.model_filter.end(), m) != options_.model_filter.end()) {
      out.push_back(m);
    }
  }
  return out;
}

ModelBackend Pipeline::make_backend(const std::string& model) const {
  const BackendConfig& b = config_.backends.at(model);
  ModelBackend backend;
  if (b.kind == "identity") {
    backend = identity_backend(model);
  } else if (b.kind == "replay") {
    backend = replay_backend(model, b.transcripts);
  } else {
    backend = http_chat_backend(b.http);
  }
  backend.max_output_tokens = b.http.max_output_tokens;
  backend.context_window = b.http.context_window;
  return backend;
}

void Pipeline::emit(Stage stage, const std::string& page, const std::string& model, const std::string& status,
                    const std::string& detail) const {
  if (!options_.on_event) return;
  std::lock_guard lock(*event_mutex_);
  options_.on_event(StageEvent{stage, page, model, status, detail});
}

bool Pipeline::done(const fs::path& artifact) const { return !options_.force && fs::exists(artifact); }

std::string Pipeline::now() const { return config_.seed ? kFrozenTimestamp : utc_timestamp(); }

bool Pipeline::has_failed(const std::string& key) const {
  std::lock_guard lock(*failed_mutex_);
  return failed_.count(key) > 0;
}

void Pipeline::mark_failed(const std::string& key) {
  std::lock_guard lock(*failed_mutex_);
  failed_.insert(key);
}

PipelineOutcome Pipeline::for_each_page(Stage stage, const std::function<void(const std::string&)>& body) {
  std::atomic<std::size_t> failures{0};
  parallel_for(pages_.size(), config_.page_parallelism, [&](std::size_t i) {
    const std::string& page = pages_[i];
    if (has_failed(page)) {
      emit(stage, page, {}, "skipped", "an earlier stage failed");
      return;
    }
    try {
      body(page);
    } catch (const std::exception& e) {
      mark_failed(page);
      ++failures;
      spdlog::error("{} {}: {}", to_string(stage), page, e.what());
      emit(stage, page, {}, "failed", e.what());
    }
  });
  return {failures.load(), std::nullopt};
}

PipelineOutcome Pipeline::for_each_page_model(
    Stage stage, const std::function<void(const std::string&, const std::string&)>& body) {
  std::vector<std::pair<std::string, std::string>> work;
  for (const auto& page : pages_) {
    for (const auto& model : models()) work.emplace_back(page, model);
  }
  std::atomic<std::size_t> failures{0};
  parallel_for(work.size(), config_.page_parallelism, [&](std::size_t i) {
    const auto& [page, model] = work[i];
    const std::string key = page + "\n" + model;
    if (has_failed(page) || has_failed(key)) {
      emit(stage, page, model, "skipped", "an earlier stage failed");
      return;
    }
    try {
      body(page, model);
    } catch (const std::exception& e) {
      mark_failed(key);
      ++failures;
      spdlog::error("{} {} {}: {}", to_string(stage), page, model, e.what());
      emit(stage, page, model, "failed", e.what());
    }
  });
  return {failures.load(), std::nullopt};
}

void Pipeline::fetch_page_stage(const std::string& page) {
  if (done(ws_.page_meta(page)) && fs::exists(ws_.original_html(page))) {
    emit(Stage::Fetch, page, {}, "skipped", "already fetched");
    return;
  }
  auto source = sources_.find(page);
  if (source == sources_.end()) throw Error(ErrorCode::ConfigError, "no source for page " + page);
  if (options_.dry_run) {
    emit(Stage::Fetch, page, {}, "planned", source->second);
    return;
  }
  FetchOptions fetch_options;
  fetch_options.clock = [this] { return now(); };
  FetchedPage fetched = fetch_page_raw(source->second, fetch_options);
  if (options_.force) remove_tree(ws_.page_dir(page));
  write_file_atomic(ws_.original_html(page), fetched.body);
  Json meta;
  meta["page_id"] = page;
  meta["source"] = source->second;
  meta["final_url"] = fetched.final_url;
  meta["fetched_at"] = fetched.doc.fetched_at;
  meta["sha256"] = sha256_hex(fetched.body);
  meta["doctype"] = fetched.doc.doctype ? Json(*fetched.doc.doctype) : Json();
  meta["nodes"] = node_count(fetched.doc.root);
  meta["warnings"] = fetched.doc.warnings;
  write_json(ws_.page_meta(page), meta);
  emit(Stage::Fetch, page, {}, "done", fetched.final_url);
}

void Pipeline::chunk_stage(const std::string& page) {
  const fs::path dir = ws_.chunks_dir(page);
  if (done(dir / "manifest.json")) {
    emit(Stage::Chunk, page, {}, "skipped", "already chunked");
    return;
  }
  if (options_.dry_run) {
    emit(Stage::Chunk, page, {}, "planned");
    return;
  }
  DomDocument doc = parse_html(read_file(ws_.original_html(page)));
  ChunkIdSource ids = config_.seed ? ChunkIdSource(*config_.seed, page) : ChunkIdSource::from_entropy();
  ChunkManifest manifest = plan_chunks(doc, estimator_, config_.budget, config_.headroom, std::move(ids));
  manifest.page_id = page;
  remove_tree(dir);
  save_manifest(manifest, dir);
  std::size_t oversize = 0;
  for (const auto& c : manifest.chunks) oversize += c.oversize;
  emit(Stage::Chunk, page, {}, "done",
       std::to_string(manifest.chunks.size()) + " chunks" +
           (oversize ? ", " + std::to_string(oversize) + " oversize" : std::string()));
}

void Pipeline::audit_original_stage(const std::string& page) {
  if (done(ws_.audit_file(page, "original"))) {
    emit(Stage::AuditOriginal, page, {}, "skipped", "already audited");
    return;
  }
  if (options_.dry_run) {
    emit(Stage::AuditOriginal, page, {}, "planned", auditor_->name());
    return;
  }
  AuditTarget target;
  target.page_id = page;
  target.html_file = ws_.original_html(page);
  AuditResult result;
  {
    GateLock lock(*audit_gate_);
    result = auditor_->audit(target);
  }
  write_file_atomic(ws_.audit_file(page, "original"), result.raw_json);
  write_json(ws_.audit_parsed_file(page, "original"), report_to_json(result.report));
  emit(Stage::AuditOriginal, page, {}, "done",
       std::to_string(filter_actionable(result.report).size()) + " actionable audits");
}

void Pipeline::remediate_stage(const std::string& page, const std::string& model) {
  if (done(ws_.results_file(page, model))) {
    emit(Stage::Remediate, page, model, "skipped", "already remediated");
    return;
  }
  if (options_.dry_run) {
    emit(Stage::Remediate, page, model, "planned");
    return;
  }
  ChunkManifest manifest = load_manifest(ws_.chunks_dir(page));
  AuditReport report = parse_report(read_file(ws_.audit_file(page, "original")), page);
  std::vector<AuditRecord> audits = filter_actionable(report);

  RemediationOptions options;
  options.retries = config_.retries;
  options.parallelism = config_.chunk_parallelism;
  options.estimator = estimator_;
  if (config_.seed) options.elapsed_override = [] { return 0.0; };
  std::vector<ChunkResult> results = remediate_page(manifest, audits, backends_.at(model), options);

  remove_tree(ws_.modified_dir(page, model));
  remove_tree(ws_.transcripts_dir(page, model));
  Json chunks = Json::array();
  std::size_t modified = 0;
  std::size_t rejected = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const ChunkResult& r = results[i];
    Chunk out = manifest.chunks[i];
    out.html = r.modified_html;
    const std::string file = chunk_file_name(out);
    write_file_atomic(ws_.modified_chunks_dir(page, model) / file, out.html);
    write_json(ws_.transcripts_dir(page, model) / (fs::path(file).stem().string() + ".json"), transcript_to_json(r));
    modified += r.status == ChunkStatus::Modified;
    rejected += r.status == ChunkStatus::Rejected;
    chunks.push_back(Json{{"chunk_id", r.chunk_id},
                          {"ordinal", r.ordinal},
                          {"status", to_string(r.status)},
                          {"reason", r.reason},
                          {"change_notes", r.change_notes},
                          {"file", file}});
  }
  Json summary;
  summary["page_id"] = page;
  summary["model_id"] = model;
  summary["prompt_template_hash"] = prompt_template_hash();
  summary["completed_at"] = now();
  summary["modified"] = modified;
  summary["rejected"] = rejected;
  summary["chunks"] = std::move(chunks);
  write_json(ws_.results_file(page, model), summary);
  emit(Stage::Remediate, page, model, "done",
       fmt::format("{} modified, {} rejected of {}", modified, rejected, results.size()));
}

void Pipeline::reassemble_stage(const std::string& page, const std::string& model) {
  if (done(ws_.reassembled_html(page, model))) {
    emit(Stage::Reassemble, page, model, "skipped", "already reassembled");
    return;
  }
  if (options_.dry_run) {
    emit(Stage::Reassemble, page, model, "planned");
    return;
  }
  ChunkManifest manifest = load_manifest(ws_.chunks_dir(page));
  Json results = read_json(ws_.results_file(page, model));
  std::vector<Chunk> chunks;
  for (const auto& entry : results.at("chunks")) {
    const std::string id = entry.at("chunk_id").get<std::string>();
    auto it = std::find_if(manifest.chunks.begin(), manifest.chunks.end(),
                           [&](const Chunk& c) { return c.chunk_id == id; });
    if (it == manifest.chunks.end()) throw Error(ErrorCode::UnknownChunk, id);
    Chunk chunk = *it;
    chunk.html = read_file(ws_.modified_chunks_dir(page, model) / entry.at("file").get<std::string>());
    chunks.push_back(std::move(chunk));
  }
  DomDocument doc = domremedy::reassemble(manifest, chunks);
  write_file_atomic(ws_.reassembled_html(page, model), serialize_html(doc));
  emit(Stage::Reassemble, page, model, "done");
}

void Pipeline::audit_modified_stage(const std::string& page, const std::string& model) {
  if (done(ws_.audit_file(page, model))) {
    emit(Stage::AuditModified, page, model, "skipped", "already audited");
    return;
  }
  if (options_.dry_run) {
    emit(Stage::AuditModified, page, model, "planned", auditor_->name());
    return;
  }
  AuditTarget target;
  target.page_id = page;
  target.model_id = model;
  target.html_file = ws_.reassembled_html(page, model);
  target.original_html = ws_.original_html(page);
  AuditResult result;
  {
    GateLock lock(*audit_gate_);
    result = auditor_->audit(target);
  }
  write_file_atomic(ws_.audit_file(page, model), result.raw_json);
  write_json(ws_.audit_parsed_file(page, model), report_to_json(result.report));
  emit(Stage::AuditModified, page, model, "done",
       std::to_string(filter_actionable(result.report).size()) + " actionable audits");
}

void Pipeline::diff_stage(const std::string& page, const std::string& model) {
  if (done(ws_.diff_file(page, model))) {
    emit(Stage::Diff, page, model, "skipped", "already diffed");
    return;
  }
  if (options_.dry_run) {
    emit(Stage::Diff, page, model, "planned");
    return;
  }
  DomDocument original = parse_html(read_file(ws_.original_html(page)));
  DomDocument modified = parse_html(read_file(ws_.reassembled_html(page, model)));
  ChangeSet cs = diff_trees(original.root, modified.root);
  cs.page_id = page;
  cs.model_id = model;
  write_json(ws_.diff_file(page, model), changeset_to_json(cs));
  emit(Stage::Diff, page, model, "done", std::to_string(cs.changes.size()) + " changes");
}

PipelineOutcome Pipeline::fetch() {
  if (!options_.dry_run) {
    fs::create_directories(ws_.root());
    write_json(ws_.config_file(), config_to_json(config_));
  }
  return for_each_page(Stage::Fetch, [this](const std::string& p) { fetch_page_stage(p); });
}

PipelineOutcome Pipeline::chunk() {
  return for_each_page(Stage::Chunk, [this](const std::string& p) { chunk_stage(p); });
}

PipelineOutcome Pipeline::audit() {
  PipelineOutcome out = for_each_page(Stage::AuditOriginal, [this](const std::string& p) { audit_original_stage(p); });
  out.failures += for_each_page_model(Stage::AuditModified, [this](const std::string& p, const std::string& m) {
                    if (!options_.dry_run && !fs::exists(ws_.reassembled_html(p, m))) {
                      emit(Stage::AuditModified, p, m, "skipped", "not reassembled yet");
                      return;
                    }
                    audit_modified_stage(p, m);
                  }).failures;
  return out;
}

PipelineOutcome Pipeline::remediate() {
  return for_each_page_model(Stage::Remediate,
                             [this](const std::string& p, const std::string& m) { remediate_stage(p, m); });
}

PipelineOutcome Pipeline::reassemble() {
  return for_each_page_model(Stage::Reassemble,
                             [this](const std::string& p, const std::string& m) { reassemble_stage(p, m); });
}

PipelineOutcome Pipeline::diff() {
  return for_each_page_model(Stage::Diff, [this](const std::string& p, const std::string& m) { diff_stage(p, m); });
}

PipelineOutcome Pipeline::report() {
  PipelineOutcome out;
  if (options_.dry_run) {
    emit(Stage::Report, {}, {}, "planned");
    return out;
  }
  try {
    RunReport run = build_report();
    write_reports(run);
    out.report = std::move(run);
    emit(Stage::Report, {}, {}, "done", ws_.reports_dir().string());
  } catch (const std::exception& e) {
    ++out.failures;
    spdlog::error("report: {}", e.what());
    emit(Stage::Report, {}, {}, "failed", e.what());
  }
  return out;
}

PipelineOutcome Pipeline::run() {
  PipelineOutcome total;
  auto add = [&](PipelineOutcome o) {
    total.failures += o.failures;
    if (o.report) total.report = std::move(o.report);
  };
  add(fetch());
  add(chunk());
  add(for_each_page(Stage::AuditOriginal, [this](const std::string& p) { audit_original_stage(p); }));
  add(remediate());
  add(reassemble());
  add(for_each_page_model(Stage::AuditModified,
                          [this](const std::string& p, const std::string& m) { audit_modified_stage(p, m); }));
  add(diff());
  add(report());
  return total;
}

RunReport Pipeline::build_report() const {
  RunReport run;
  run.prompt_template_hash = prompt_template_hash();
  run.tool_versions["domremedy"] = kToolVersion;
  run.tool_versions["auditor"] = auditor_->name();
  run.counting_mode = config_.counting_mode;
  run.aggregation_mode = config_.aggregation_mode;
  run.change_aggregation = config_.change_aggregation;
  run.pages = pages_;

  std::map<std::string, AuditReport> originals;
  for (const auto& page : pages_) {
    auto file = ws_.audit_file(page, "original");
    if (!fs::exists(file)) continue;
    AuditReport report = parse_report(read_file(file), page);
    if (!report.tool_version.empty()) run.tool_versions.emplace("lighthouse", report.tool_version);
    originals.emplace(page, std::move(report));
  }
  run.total_pages = originals.size();

  for (const auto& model : models()) {
    ModelRun m;
    m.model_id = model;
    std::vector<AuditReport> before;
    std::vector<AuditReport> after;
    for (const auto& page : pages_) {
      auto results = ws_.results_file(page, model);
      if (fs::exists(results)) {
        for (const auto& entry : read_json(results).at("chunks")) {
          m.rejected_chunks += entry.at("status").get<std::string>() == to_string(ChunkStatus::Rejected);
        }
      }
      auto modified_file = ws_.audit_file(page, model);
      auto original = originals.find(page);
      if (original == originals.end() || !fs::exists(modified_file)) {
        ++m.failed_pages;
        continue;
      }
      before.push_back(original->second);
      after.push_back(parse_report(read_file(modified_file), page, model));
      auto diff = ws_.diff_file(page, model);
      if (fs::exists(diff)) m.changes.push_back(changeset_from_json(read_json(diff)));
    }
    m.incidence = build_incidence_table(before, after, categories_, config_.counting_mode);
    m.rollup = category_rollup(m.incidence, categories_, config_.aggregation_mode);
    run.models.push_back(std::move(m));
  }
  return run;
}

void Pipeline::write_reports(const RunReport& run) const {
  const fs::path dir = ws_.reports_dir();
  write_json(dir / "run_report.json", run_report_to_json(run));
  write_file_atomic(dir / "report.csv", emit_report(run, ReportFormat::Csv, categories_));
  write_file_atomic(dir / "report.md", emit_report(run, ReportFormat::Markdown, categories_));
}

}  // namespace domremedy
