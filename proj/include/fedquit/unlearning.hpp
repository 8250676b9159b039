#pragma once

// Client-side unlearning by distilling from a penalized copy of the global
// model: the teacher is the global model with its true-class output masked
// (at the logit or softmax layer) or replaced by the uniform distribution,
// and the student minimizes KL(teacher || student) on the forget data.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fedquit/data.hpp"
#include "fedquit/nn.hpp"

namespace fedquit {

enum class TeacherKind {
  LogitsFixed,   // true-class logit := v
  LogitsMin,     // true-class logit := min of that sample's logits
  SoftmaxFixed,  // true-class probability := v, remainder spread uniformly
  Incompetent,   // uniform distribution, ignores the global model
};

struct TeacherVariant {
  TeacherKind kind = TeacherKind::LogitsFixed;
  double v = 0.0;

  static TeacherVariant logits_fixed(double v) { return {TeacherKind::LogitsFixed, v}; }
  static TeacherVariant logits_min() { return {TeacherKind::LogitsMin, 0.0}; }
  static TeacherVariant softmax_fixed(double v) { return {TeacherKind::SoftmaxFixed, v}; }
  static TeacherVariant incompetent() { return {TeacherKind::Incompetent, 0.0}; }

  void validate() const;
};

struct UnlearnConfig {
  TeacherVariant variant = TeacherVariant::logits_fixed(0.0);
  std::uint32_t epochs = 1;  // E_u
  double lr = 1e-3;          // eta_u
  std::uint32_t batch_size = 32;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double tau = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Replace the true-class logit with v, keep the rest, softmax(tau).
std::vector<double> modify_outputs_logits(std::span<const double> logits,
                                          std::uint32_t label, double v,
                                          double tau = 1.0);

// Set the true-class probability to v and spread g(y) - v uniformly over the
// other classes. Negative entries (possible when g(y) < v) are clamped to 0
// and the vector renormalized; *clamped reports whether that repair fired.
std::vector<double> modify_outputs_softmax(std::span<const double> probs,
                                           std::uint32_t label, double v,
                                           bool* clamped = nullptr);

std::vector<double> incompetent_teacher(std::uint32_t num_classes);

// Teacher target for one example given the frozen global model's logits.
std::vector<double> teacher_target(const TeacherVariant& variant,
                                   std::span<const double> teacher_logits,
                                   std::uint32_t label, double tau);

// Maps the frozen teacher's logits and the true label to a target
// distribution. Lets tests substitute a custom teacher.
using TeacherFn = std::function<std::vector<double>(
    std::span<const double> teacher_logits, std::uint32_t label)>;

// The local unlearning routine: the student starts as a copy of the global
// model and, for E_u epochs of seeded minibatches over the forget data, takes
// optimizer steps on KL(teacher || student). The teacher stays frozen at the
// incoming global model.
ParameterSet fedquit_unlearn(const ParameterSet& global,
                             const MlpArchitecture& arch, const Dataset& forget,
                             const UnlearnConfig& cfg);

ParameterSet fedquit_unlearn_with_teacher(const ParameterSet& global,
                                          const MlpArchitecture& arch,
                                          const Dataset& forget,
                                          const UnlearnConfig& cfg,
                                          const TeacherFn& teacher);

// No-op unlearning: the model is returned unchanged and the federation simply
// continues without the departing client.
ParameterSet natural_baseline(const ParameterSet& global);

// Centralized variant: unlearn on forget data, then fine-tune on retain data
// with hard labels. Returns the model after unlearning (element 0) and after
// each fine-tuning epoch (elements 1..finetune_epochs).
std::vector<ParameterSet> centralized_fedquit(const ParameterSet& model,
                                              const MlpArchitecture& arch,
                                              const Dataset& forget,
                                              const Dataset& retain,
                                              const UnlearnConfig& cfg,
                                              std::uint32_t finetune_epochs);

}  // namespace fedquit
