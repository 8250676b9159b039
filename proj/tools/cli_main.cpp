// Command-line front end: train / unlearn / recover / evaluate / pipeline /
// compare, all driven by one config file with optional flag overrides.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedquit/config.hpp"
#include "fedquit/parallel.hpp"
#include "fedquit/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitRuntimeError = 2;
constexpr int kExitNonConvergence = 3;

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<std::string> v;
  std::optional<std::string> out;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "experiment config file")
      ->required();
  cmd->add_option("--seed", [&opts](const std::vector<std::string>& vals) {
        opts.seed = std::stoull(vals.front());
        return true;
      }, "override the seed list with a single seed");
  cmd->add_option("--method", [&opts](const std::vector<std::string>& vals) {
        opts.method = vals.front();
        return true;
      }, "fedquit-logits|fedquit-softmax|incompetent|natural");
  cmd->add_option("--v", [&opts](const std::vector<std::string>& vals) {
        opts.v = vals.front();
        return true;
      }, "true-class penalty value (a real number, or 'min')");
  cmd->add_option("--out", [&opts](const std::vector<std::string>& vals) {
        opts.out = vals.front();
        return true;
      }, "output directory");
  cmd->add_option("--threads", opts.threads,
                  "worker threads (1 = serial, 0 = OpenMP default)");
}

int run_stage(const CommonOpts& opts, fedquit::PipelineStage stage) {
  fedquit::exec::set_threads(opts.threads);
  auto cfg = fedquit::parse_config(opts.config_path);
  fedquit::apply_overrides(cfg, opts.seed, opts.method, opts.v, opts.out);
  const auto result = fedquit::run_pipeline(cfg, stage);
  if (stage >= fedquit::PipelineStage::Report && !result.all_converged) {
    std::cerr << "warning: recovery did not converge within the round cap for "
                 "at least one run\n";
    return kExitNonConvergence;
  }
  return kExitOk;
}

int run_compare(const std::vector<std::string>& reports,
                const std::string& out_dir) {
  const auto rows = fedquit::compare_reports(reports);
  const std::string csv = fedquit::compare_table_csv(rows);
  const std::string json = fedquit::compare_table_json(rows);
  std::filesystem::create_directories(out_dir);
  const auto csv_path = std::filesystem::path(out_dir) / "compare.csv";
  const auto json_path = std::filesystem::path(out_dir) / "compare.json";
  std::ofstream(csv_path) << csv;
  std::ofstream(json_path) << json;
  std::cout << csv;
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated unlearning simulator"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::vector<std::string> compare_paths;
  std::string compare_out = ".";

  auto* train = app.add_subcommand("train", "train the original global model");
  add_common(train, opts);
  auto* unlearn = app.add_subcommand(
      "unlearn", "produce the unlearned model from the original checkpoint");
  add_common(unlearn, opts);
  auto* recover = app.add_subcommand(
      "recover", "run the special round and recover to the retrained accuracy");
  add_common(recover, opts);
  auto* evaluate = app.add_subcommand(
      "evaluate", "compute the metrics report from saved checkpoints");
  add_common(evaluate, opts);
  auto* pipeline = app.add_subcommand(
      "pipeline", "full run: train, unlearn, recover, report, aggregate");
  add_common(pipeline, opts);
  auto* compare = app.add_subcommand(
      "compare", "tabulate one row per method from report JSON files");
  compare->add_option("reports", compare_paths, "report.json paths")
      ->required()
      ->expected(-1);
  compare->add_option("--out", compare_out, "directory for compare.csv/json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return run_stage(opts, fedquit::PipelineStage::Original);
    if (unlearn->parsed()) return run_stage(opts, fedquit::PipelineStage::Unlearned);
    if (recover->parsed()) return run_stage(opts, fedquit::PipelineStage::Recovered);
    if (evaluate->parsed()) return run_stage(opts, fedquit::PipelineStage::Report);
    if (pipeline->parsed()) return run_stage(opts, fedquit::PipelineStage::Full);
    if (compare->parsed()) return run_compare(compare_paths, compare_out);
  } catch (const fedquit::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntimeError;
  }
  return kExitOk;
}
