#include "fedquit/unlearning.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "fedquit/rng.hpp"

namespace fedquit {

void TeacherVariant::validate() const {
  if (kind == TeacherKind::SoftmaxFixed && (v < 0.0 || v >= 1.0)) {
    throw DomainError("TeacherVariant: softmax v must be in [0, 1)");
  }
  if (kind == TeacherKind::LogitsFixed && !std::isfinite(v)) {
    throw DomainError("TeacherVariant: logit v must be finite");
  }
}

void UnlearnConfig::validate() const {
  variant.validate();
  if (epochs < 1) throw DomainError("UnlearnConfig: epochs must be >= 1");
  if (lr < 0.0) throw DomainError("UnlearnConfig: lr must be >= 0");
  if (batch_size < 1) throw DomainError("UnlearnConfig: batch_size must be >= 1");
  if (!(tau > 0.0)) throw DomainError("UnlearnConfig: tau must be > 0");
}

std::vector<double> modify_outputs_logits(std::span<const double> logits,
                                          std::uint32_t label, double v,
                                          double tau) {
  if (label >= logits.size()) {
    throw DomainError("modify_outputs_logits: label out of range");
  }
  std::vector<double> masked(logits.begin(), logits.end());
  masked[label] = v;
  return softmax(masked, tau);
}

std::vector<double> modify_outputs_softmax(std::span<const double> probs,
                                           std::uint32_t label, double v,
                                           bool* clamped) {
  if (probs.size() < 2) {
    throw DomainError("modify_outputs_softmax: need at least 2 classes");
  }
  if (label >= probs.size()) {
    throw DomainError("modify_outputs_softmax: label out of range");
  }
  if (v < 0.0 || v >= 1.0) {
    throw DomainError("modify_outputs_softmax: v must be in [0, 1)");
  }
  const std::size_t c = probs.size();
  const double share = (probs[label] - v) / static_cast<double>(c - 1);
  std::vector<double> out(c);
  bool any_negative = false;
  for (std::size_t i = 0; i < c; ++i) {
    out[i] = (i == label) ? v : probs[i] + share;
    if (out[i] < 0.0) any_negative = true;
  }
  if (clamped) *clamped = any_negative;
  if (any_negative) {
    double sum = 0.0;
    for (auto& p : out) {
      p = std::max(p, 0.0);
      sum += p;
    }
    for (auto& p : out) p /= sum;
  }
  return out;
}

std::vector<double> incompetent_teacher(std::uint32_t num_classes) {
  if (num_classes < 2) throw DomainError("incompetent_teacher: need >= 2 classes");
  return std::vector<double>(num_classes, 1.0 / num_classes);
}

std::vector<double> teacher_target(const TeacherVariant& variant,
                                   std::span<const double> teacher_logits,
                                   std::uint32_t label, double tau) {
  switch (variant.kind) {
    case TeacherKind::LogitsFixed:
      return modify_outputs_logits(teacher_logits, label, variant.v, tau);
    case TeacherKind::LogitsMin: {
      const double v =
          *std::min_element(teacher_logits.begin(), teacher_logits.end());
      return modify_outputs_logits(teacher_logits, label, v, tau);
    }
    case TeacherKind::SoftmaxFixed:
      return modify_outputs_softmax(softmax(teacher_logits, tau), label,
                                    variant.v);
    case TeacherKind::Incompetent:
      return incompetent_teacher(
          static_cast<std::uint32_t>(teacher_logits.size()));
  }
  throw DomainError("teacher_target: unknown variant");
}

namespace {

OptimizerState make_optimizer(const UnlearnConfig& cfg) {
  return cfg.optimizer == OptimizerKind::Adam ? OptimizerState::adam(cfg.lr)
                                              : OptimizerState::sgd(cfg.lr);
}

}  // namespace

ParameterSet fedquit_unlearn_with_teacher(const ParameterSet& global,
                                          const MlpArchitecture& arch,
                                          const Dataset& forget,
                                          const UnlearnConfig& cfg,
                                          const TeacherFn& teacher) {
  cfg.validate();
  if (forget.empty()) throw DomainError("fedquit_unlearn: empty forget set");

  ParameterSet student = global;  // student starts at the global weights
  OptimizerState opt = make_optimizer(cfg);
  RngStream rng(mix_seed(cfg.seed, StreamTag::Unlearn));

  std::vector<std::size_t> order(forget.size());
  for (std::uint32_t e = 0; e < cfg.epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      LabeledBatch batch;
      batch.inputs.reserve(end - start);
      batch.targets.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = forget.examples[order[i]];
        // Teacher logits come from the incoming global model, never from the
        // student, so the targets are frozen for the whole routine.
        const auto logits = forward(global, arch, ex.features);
        batch.inputs.emplace_back(ex.features);
        batch.targets.push_back(teacher(logits, ex.label));
      }
      const auto bp = backprop(student, arch, batch, LossKind::KLToTeacher, cfg.tau);
      optimizer_step(opt, student, bp.grads);
    }
  }
  return student;
}

ParameterSet fedquit_unlearn(const ParameterSet& global,
                             const MlpArchitecture& arch, const Dataset& forget,
                             const UnlearnConfig& cfg) {
  std::uint64_t clamp_events = 0;
  const TeacherFn teacher = [&](std::span<const double> logits,
                                std::uint32_t label) {
    if (cfg.variant.kind == TeacherKind::SoftmaxFixed) {
      bool clamped = false;
      auto t = modify_outputs_softmax(softmax(logits, cfg.tau), label,
                                      cfg.variant.v, &clamped);
      if (clamped) ++clamp_events;
      return t;
    }
    return teacher_target(cfg.variant, logits, label, cfg.tau);
  };
  auto student = fedquit_unlearn_with_teacher(global, arch, forget, cfg, teacher);
  if (clamp_events > 0) {
    std::clog << "fedquit_unlearn: softmax clamp repair fired on "
              << clamp_events << " example(s)\n";
  }
  return student;
}

ParameterSet natural_baseline(const ParameterSet& global) { return global; }

std::vector<ParameterSet> centralized_fedquit(const ParameterSet& model,
                                              const MlpArchitecture& arch,
                                              const Dataset& forget,
                                              const Dataset& retain,
                                              const UnlearnConfig& cfg,
                                              std::uint32_t finetune_epochs) {
  std::vector<ParameterSet> checkpoints;
  checkpoints.reserve(finetune_epochs + 1);
  checkpoints.push_back(fedquit_unlearn(model, arch, forget, cfg));

  if (finetune_epochs == 0) return checkpoints;
  if (retain.empty()) throw DomainError("centralized_fedquit: empty retain set");

  ParameterSet current = checkpoints.front();
  OptimizerState opt = make_optimizer(cfg);
  RngStream rng(mix_seed(cfg.seed, StreamTag::Finetune));
  const std::uint32_t classes = arch.num_classes();
  std::vector<std::size_t> order(retain.size());
  for (std::uint32_t e = 0; e < finetune_epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      LabeledBatch batch;
      batch.inputs.reserve(end - start);
      batch.targets.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = retain.examples[order[i]];
        batch.inputs.emplace_back(ex.features);
        std::vector<double> onehot(classes, 0.0);
        onehot[ex.label] = 1.0;
        batch.targets.push_back(std::move(onehot));
      }
      const auto bp = backprop(current, arch, batch, LossKind::CrossEntropyHard);
      optimizer_step(opt, current, bp.grads);
    }
    checkpoints.push_back(current);
  }
  return checkpoints;
}

}  // namespace fedquit
