#pragma once

// Metrics reporting: per-run reports with deltas against the retrained gold
// standard, JSON/CSV serialization, and the cross-method comparison table.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedquit/evaluation.hpp"
#include "fedquit/federation.hpp"

namespace fedquit {

struct ModelMetrics {
  double test_acc = 0.0;
  double forget_acc = 0.0;
  double mia_song = 0.0;
  double mia_yeom = 0.0;
};

// Test/forget accuracy plus both MIA rates for one model. The confidence
// attack is fit on (retain = seen, test = unseen); the loss attack threshold
// is this model's average loss on the retain data.
ModelMetrics evaluate_model(const ParameterSet& params, const MlpArchitecture& arch,
                            const Dataset& forget, const Dataset& retain,
                            const Dataset& test, std::uint64_t mia_seed);

struct MetricsReport {
  std::string method;
  std::uint64_t seed = 0;
  std::uint32_t client = 0;

  ModelMetrics model;      // the evaluated (recovered) model
  ModelMetrics original;   // before unlearning
  ModelMetrics retrained;  // gold standard

  // Degradation probes taken right after the unlearning step, before recovery.
  double post_unlearn_test_acc = 0.0;
  double post_unlearn_forget_acc = 0.0;

  bool recovery_converged = true;
  std::uint32_t recovery_rounds = 0;
  std::optional<double> ce;  // retrain rounds / max(recovery rounds, 1)

  double forget_acc_delta = 0.0;
  double mia_song_delta = 0.0;
  double mia_yeom_delta = 0.0;

  std::uint64_t bytes_total = 0;  // unlearning round + recovery
};

// Evaluates the three models and fills every metric; CE is omitted when the
// recovery did not converge.
MetricsReport build_report(const std::string& method, std::uint64_t seed,
                           std::uint32_t client, const ParameterSet& evaluated,
                           const ParameterSet& retrained,
                           const ParameterSet& original,
                           const MlpArchitecture& arch, const Dataset& forget,
                           const Dataset& retain, const Dataset& test,
                           const ParameterSet& post_unlearn,
                           const RecoveryResult& recovery,
                           std::uint32_t retrain_rounds,
                           std::uint64_t bytes_total, std::uint64_t mia_seed);

std::string report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const std::string& json_text);

// Mean/std over a set of runs (clients x seeds) of one method.
struct AggregateReport {
  std::string method;
  std::size_t num_runs = 0;
  std::size_t num_converged = 0;
  MetricsReport mean;
  MetricsReport stddev;
  double mean_rounds = 0.0;
  double ce = 0.0;  // retrain rounds / max(mean rounds, 1)
};

AggregateReport aggregate_reports(const std::vector<MetricsReport>& reports,
                                  std::uint32_t retrain_rounds);
std::string aggregate_to_json(const AggregateReport& agg);

// One comparison row per report file (per-run or aggregate JSON).
// CSV schema: method,rounds,ce,test_acc,forget_acc,forget_acc_delta,
//             mia_song,mia_song_delta,mia_yeom,mia_yeom_delta
inline constexpr const char* kCompareCsvHeader =
    "method,rounds,ce,test_acc,forget_acc,forget_acc_delta,"
    "mia_song,mia_song_delta,mia_yeom,mia_yeom_delta";

struct CompareRow {
  std::string method;
  double rounds = 0.0;
  std::optional<double> ce;
  double test_acc = 0.0;
  double forget_acc = 0.0;
  double forget_acc_delta = 0.0;
  double mia_song = 0.0;
  double mia_song_delta = 0.0;
  double mia_yeom = 0.0;
  double mia_yeom_delta = 0.0;
};

std::vector<CompareRow> compare_reports(const std::vector<std::string>& paths);
std::string compare_table_csv(const std::vector<CompareRow>& rows);
std::string compare_table_json(const std::vector<CompareRow>& rows);

}  // namespace fedquit
