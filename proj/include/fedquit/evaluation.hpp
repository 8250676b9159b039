#pragma once

// Model evaluation primitives: accuracy, per-example losses/confidences, and
// the two membership-inference predictors (confidence- and loss-threshold).

#include <cstdint>
#include <vector>

#include "fedquit/data.hpp"
#include "fedquit/nn.hpp"

namespace fedquit {

// Fraction of examples whose argmax logit equals the label; argmax ties
// resolve to the lowest class index.
double accuracy(const ParameterSet& params, const MlpArchitecture& arch,
                const Dataset& data);

// Per-example cross-entropy of the true label (tau = 1).
std::vector<double> per_example_losses(const ParameterSet& params,
                                       const MlpArchitecture& arch,
                                       const Dataset& data);

// Per-example top-1 softmax confidence (tau = 1).
std::vector<double> per_example_confidences(const ParameterSet& params,
                                            const MlpArchitecture& arch,
                                            const Dataset& data);

// Mean per-example cross-entropy over the dataset, summed in index order.
double avg_train_loss(const ParameterSet& params, const MlpArchitecture& arch,
                      const Dataset& data);

// Serial reference kernels; the public functions above dispatch between these
// and the OpenMP versions and always produce identical bits.
namespace detail {
std::vector<double> confidences_serial(const ParameterSet&, const MlpArchitecture&,
                                       const Dataset&);
std::vector<double> confidences_omp(const ParameterSet&, const MlpArchitecture&,
                                    const Dataset&);
std::vector<double> losses_serial(const ParameterSet&, const MlpArchitecture&,
                                  const Dataset&);
std::vector<double> losses_omp(const ParameterSet&, const MlpArchitecture&,
                               const Dataset&);
std::vector<std::uint8_t> correct_serial(const ParameterSet&, const MlpArchitecture&,
                                         const Dataset&);
std::vector<std::uint8_t> correct_omp(const ParameterSet&, const MlpArchitecture&,
                                      const Dataset&);
}  // namespace detail

enum class MiaKind { ConfidenceThreshold, LossThreshold };

struct MiaPredictor {
  MiaKind kind = MiaKind::ConfidenceThreshold;
  double threshold = 0.0;
  std::size_t seen_size = 0;
  std::size_t unseen_size = 0;
  // Balanced accuracy achieved on the fitting splits (confidence attack only).
  double train_balanced_accuracy = 0.0;
};

// Confidence-threshold attack: balance seen/unseen by seeded subsampling,
// then pick the threshold over observed confidences that maximizes balanced
// accuracy (members are predicted by confidence >= threshold, ties resolve to
// the lowest threshold).
MiaPredictor fit_mia_song(const ParameterSet& params, const MlpArchitecture& arch,
                          const Dataset& seen, const Dataset& unseen,
                          std::uint64_t seed);

// Loss-threshold attack: a sample is a member when its loss is strictly below
// the model's average loss over the given (retain) data.
MiaPredictor fit_mia_yeom(const ParameterSet& params, const MlpArchitecture& arch,
                          const Dataset& retain);

// Fraction of `target` predicted as members.
double mia_rate(const MiaPredictor& predictor, const ParameterSet& params,
                const MlpArchitecture& arch, const Dataset& target);

}  // namespace fedquit
