#pragma once

// Experiment orchestration: train -> unlearn -> recover -> report, with
// per-stage artifacts, a resumable manifest, and multi-seed / leave-each-
// client-out sweeps.

#include <filesystem>
#include <string>
#include <vector>

#include "fedquit/config.hpp"
#include "fedquit/report.hpp"

namespace fedquit {

// Pipeline stages in execution order. Retrained is implied by Recovered.
enum class PipelineStage { Original, Unlearned, Recovered, Report, Full };

struct PipelineResult {
  std::filesystem::path out_dir;
  std::vector<MetricsReport> reports;
  bool all_converged = true;
};

// Runs every (seed, designated client) sub-run up to `final_stage`, reusing
// artifacts recorded in the output directory's manifest when their config
// hashes still match. `Full` additionally writes the aggregate report and the
// per-run CSV.
PipelineResult run_pipeline(const ExperimentConfig& cfg,
                            PipelineStage final_stage = PipelineStage::Full);

// Materializes the train/test datasets and the client shards for one seed.
struct SeedData {
  FederationData fed;
  MlpArchitecture arch;
  ParameterSet init;
  FederationConfig fed_cfg;  // federation config with the seed-mixed stream
};
SeedData prepare_seed(const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace fedquit
