#include <iostream>

#include <fmt/format.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "domremedy/error.hpp"
#include "domremedy/html.hpp"
#include "domremedy/workspace.hpp"

namespace domremedy {

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitFailures = 1;
constexpr int kExitUsage = 2;

struct CliArgs {
  std::optional<std::string> config;
  std::optional<std::string> workspace;
  std::vector<std::string> models;
  std::optional<std::uint64_t> seed;
  bool dry_run = false;
  bool json = false;
  bool force = false;
  std::string format = "markdown";
  bool verbose = false;
};

void print_event(const StageEvent& e, bool json) {
  if (json) {
    nlohmann::ordered_json line{{"stage", to_string(e.stage)}, {"page", e.page}, {"model", e.model},
                                {"status", e.status}, {"detail", e.detail}};
    std::cerr << line.dump() << "\n" << std::flush;
    return;
  }
  std::string line = fmt::format("{:<15} {:<8}", to_string(e.stage), e.status);
  if (!e.page.empty()) line += " " + e.page;
  if (!e.model.empty()) line += " [" + e.model + "]";
  if (!e.detail.empty()) line += (e.page.empty() ? " " : ": ") + e.detail;
  std::cerr << line << "\n";
}

PipelineConfig resolve_config(const CliArgs& args, fs::path& workspace) {
  PipelineConfig config;
  if (args.config) {
    config = load_config(*args.config);
  } else if (args.workspace && fs::exists(fs::path(*args.workspace) / "config.json")) {
    config = load_config(fs::path(*args.workspace) / "config.json");
  } else {
    throw Error(ErrorCode::ConfigError, "no --config given and no config.json in the workspace");
  }
  if (args.workspace) {
    config.workspace = fs::absolute(*args.workspace);
  }
  if (!config.workspace) throw Error(ErrorCode::ConfigError, "no workspace given (--workspace or \"workspace\")");
  if (args.seed) config.seed = args.seed;
  validate_config(config);
  workspace = *config.workspace;
  return config;
}

int verify_pages(const PipelineConfig& config, const Workspace& ws, const std::vector<std::string>& pages) {
  TokenEstimator estimator = estimator_by_name(config.estimator);
  int status = kExitOk;
  for (const auto& page : pages) {
    try {
      DomDocument doc = parse_html(read_file(ws.original_html(page)));
      RoundTripResult r = verify_roundtrip(doc, estimator, config.budget, config.headroom);
      if (!r.ok) {
        std::cout << page << ": FAILED" << (r.ted ? " TED=" + std::to_string(*r.ted) : std::string()) << "\n";
        status = kExitFailures;
      } else if (r.ted) {
        std::cout << page << ": ok TED=" << *r.ted << " (" << r.chunk_count << " chunks)\n";
      } else {
        std::cout << page << ": ok TED=0 (implied by tree equality, too large to compute) (" << r.chunk_count
                  << " chunks)\n";
      }
    } catch (const std::exception& e) {
      std::cout << page << ": error " << e.what() << "\n";
      status = kExitFailures;
    }
  }
  return status;
}

int run_command(const std::string& command, const CliArgs& args) {
  fs::path root;
  PipelineConfig config = resolve_config(args, root);
  const ReportFormat format = report_format_from_string(args.format);
  Workspace ws(root);

  PipelineOptions options;
  options.force = args.force;
  options.dry_run = args.dry_run;
  options.model_filter = args.models;
  const bool json = args.json;
  options.on_event = [json](const StageEvent& e) { print_event(e, json); };
  Pipeline pipeline(config, ws, options);

  if (command == "verify") return verify_pages(config, ws, pipeline.page_ids());

  PipelineOutcome outcome;
  if (command == "fetch") outcome = pipeline.fetch();
  else if (command == "chunk") outcome = pipeline.chunk();
  else if (command == "audit") outcome = pipeline.audit();
  else if (command == "remediate") outcome = pipeline.remediate();
  else if (command == "reassemble") outcome = pipeline.reassemble();
  else if (command == "diff") outcome = pipeline.diff();
  else if (command == "report") outcome = pipeline.report();
  else if (command == "run") outcome = pipeline.run();

  if (command == "report" && outcome.report) {
    CategoryMap map = config.category_map ? CategoryMap::load(*config.category_map) : CategoryMap::seeded();
    std::cout << emit_report(*outcome.report, format, map);
  }
  return outcome.failures == 0 ? kExitOk : kExitFailures;
}

}  // namespace

int run_cli(int argc, char** argv) {
  auto logger = spdlog::get("domremedy");
  if (!logger) logger = spdlog::stderr_logger_mt("domremedy");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%l: %v");
  spdlog::set_level(spdlog::level::warn);

  CLI::App app{"Chunked HTML remediation with audit-driven prompts, tree diffs and incidence reports", "domremedy"};
  app.require_subcommand(1);
  app.fallthrough();

  CliArgs args;
  app.add_option("--config", args.config, "Pipeline configuration (JSON)");
  app.add_option("--workspace", args.workspace, "Workspace directory");
  app.add_option("--model", args.models, "Restrict to these model ids")->take_all();
  app.add_option("--seed", args.seed, "Fixed seed: deterministic chunk ids and frozen clocks");
  app.add_flag("--dry-run", args.dry_run, "Print planned work without doing it");
  app.add_flag("--json", args.json, "Line-delimited JSON progress on stderr");
  app.add_flag("--force", args.force, "Recompute even when artifacts exist");
  app.add_option("--format", args.format, "Report format: markdown or csv")
      ->check(CLI::IsMember({"markdown", "md", "csv"}));
  app.add_flag("-v,--verbose", args.verbose, "Log informational messages");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"fetch", "Download pages into the workspace"},
      {"chunk", "Split pages into token-bounded chunks"},
      {"audit", "Audit original pages and reassembled variants"},
      {"remediate", "Send chunks and their audits to each model"},
      {"reassemble", "Splice remediated chunks back into pages"},
      {"verify", "Check that chunking then reassembly reproduces each page"},
      {"diff", "Compute structural changes between original and remediated pages"},
      {"report", "Write and print the incidence and change report"},
      {"run", "Every stage in order"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  if (args.verbose) spdlog::set_level(spdlog::level::info);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run_command(command, args);
  } catch (const Error& e) {
    std::cerr << "domremedy: " << e.what() << "\n";
    return e.code() == ErrorCode::ConfigError ? kExitUsage : kExitFailures;
  } catch (const std::exception& e) {
    std::cerr << "domremedy: " << e.what() << "\n";
    return kExitFailures;
  }
}

}  // namespace domremedy
