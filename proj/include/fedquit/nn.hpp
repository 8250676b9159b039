#pragma once

// Minimal dense MLP engine: forward pass to logits, temperature softmax,
// cross-entropy / KL losses, exact backpropagation, SGD and Adam.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedquit/errors.hpp"

namespace fedquit {

enum class Activation { ReLU, Tanh };

struct MlpArchitecture {
  // layer_sizes[0] = input dim, layer_sizes.back() = class count.
  std::vector<std::uint32_t> layer_sizes;
  Activation hidden_activation = Activation::ReLU;

  void validate() const;
  std::uint32_t input_dim() const { return layer_sizes.front(); }
  std::uint32_t num_classes() const { return layer_sizes.back(); }
  // Number of weight layers (= layer_sizes.size() - 1).
  std::size_t num_layers() const { return layer_sizes.size() - 1; }
};

struct LayerParams {
  std::vector<double> weights;  // row-major, [out][in]
  std::vector<double> bias;     // [out]
  std::uint32_t in = 0;
  std::uint32_t out = 0;
  bool operator==(const LayerParams&) const = default;
};

struct ParameterSet {
  std::vector<LayerParams> layers;

  static ParameterSet zeros(const MlpArchitecture& arch);
  // Glorot-uniform weights, zero biases, drawn from the given seed.
  static ParameterSet glorot(const MlpArchitecture& arch, std::uint64_t seed);

  bool same_shape(const ParameterSet& other) const;
  bool all_finite() const;
  std::size_t num_values() const;  // weights + biases
  bool operator==(const ParameterSet&) const = default;
};

// Gradients share the parameter layout.
using GradientSet = ParameterSet;

// --- forward / losses ------------------------------------------------------

// Logits of a single input; throws ShapeError on dimension mismatch.
std::vector<double> forward(const ParameterSet& params,
                            const MlpArchitecture& arch,
                            std::span<const double> x);

// Temperature softmax with max-subtraction; tau must be > 0.
std::vector<double> softmax(std::span<const double> logits, double tau = 1.0);

// Probabilities below this are floored before any log.
inline constexpr double kProbFloor = 1e-12;

// H(q, p) = -sum q(c) log p(c), with p floored at kProbFloor.
double cross_entropy(std::span<const double> q, std::span<const double> p);

// KL(teacher || student), student floored at kProbFloor; zero teacher entries
// contribute nothing.
double kl_divergence(std::span<const double> teacher,
                     std::span<const double> student);

bool is_prob_vector(std::span<const double> p, double tol = 1e-9);

// --- backprop --------------------------------------------------------------

enum class LossKind { CrossEntropyHard, KLToTeacher };

struct LabeledBatch {
  std::vector<std::span<const double>> inputs;
  std::vector<std::vector<double>> targets;  // probability vectors
  std::size_t size() const { return inputs.size(); }
};

struct BackpropResult {
  GradientSet grads;
  double mean_loss = 0.0;
};

// Exact gradient of the mean batch loss. For both loss kinds the logit-layer
// delta is (student_prob - target) / (tau * batch). The reported mean loss is
// the full loss (for KLToTeacher it includes the teacher-entropy term).
BackpropResult backprop(const ParameterSet& params, const MlpArchitecture& arch,
                        const LabeledBatch& batch, LossKind kind,
                        double tau = 1.0);

// --- optimizers -------------------------------------------------------------

enum class OptimizerKind { Sgd, Adam };

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::Sgd;
  double lr = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  GradientSet m;  // Adam first moment (allocated on first step)
  GradientSet v;  // Adam second moment

  static OptimizerState sgd(double lr);
  static OptimizerState adam(double lr, double beta1 = 0.9,
                             double beta2 = 0.999, double eps = 1e-8);
};

void optimizer_step(OptimizerState& state, ParameterSet& params,
                    const GradientSet& grads);

// --- checkpoint format -------------------------------------------------------
//
// Little-endian byte stream: u32 layer count N, then N u32 layer sizes, then
// per weight layer the row-major weight matrix followed by the bias vector,
// all float64.

std::vector<std::uint8_t> serialize_parameters(const ParameterSet& params);

struct DeserializedParameters {
  std::vector<std::uint32_t> layer_sizes;
  ParameterSet params;
};
DeserializedParameters deserialize_parameters(std::span<const std::uint8_t> bytes);

std::size_t serialized_size(const ParameterSet& params);

void save_parameters(const std::string& path, const ParameterSet& params);
DeserializedParameters load_parameters(const std::string& path);

}  // namespace fedquit
