#include "fedquit/federation.hpp"

#include <algorithm>
#include <cmath>

#include "fedquit/evaluation.hpp"
#include "fedquit/parallel.hpp"

namespace fedquit {

void FederationConfig::validate() const {
  if (rounds < 1) throw DomainError("FederationConfig: rounds must be >= 1");
  if (local_epochs < 1) throw DomainError("FederationConfig: local_epochs must be >= 1");
  if (!(client_lr > 0.0)) throw DomainError("FederationConfig: client_lr must be > 0");
  if (!(lr_decay > 0.0) || lr_decay > 1.0) {
    throw DomainError("FederationConfig: lr_decay must be in (0, 1]");
  }
  if (batch_size < 1) throw DomainError("FederationConfig: batch_size must be >= 1");
  if (!(server_lr > 0.0)) throw DomainError("FederationConfig: server_lr must be > 0");
}

double RoundReport::mean_loss() const {
  if (client_mean_loss.empty()) return 0.0;
  double sum = 0.0;
  for (double l : client_mean_loss) sum += l;
  return sum / static_cast<double>(client_mean_loss.size());
}

ParameterSet local_train(const ParameterSet& params, const MlpArchitecture& arch,
                         const Dataset& shard, std::uint32_t epochs, double lr,
                         std::uint32_t batch_size, RngStream& rng,
                         double* mean_loss_out) {
  if (shard.empty()) throw DomainError("local_train: empty shard");
  if (batch_size < 1) throw DomainError("local_train: batch_size must be >= 1");

  ParameterSet model = params;
  OptimizerState opt = OptimizerState::sgd(lr);
  const std::uint32_t classes = arch.num_classes();

  std::vector<std::size_t> order(shard.size());
  double loss_sum = 0.0;
  std::size_t example_count = 0;

  for (std::uint32_t e = 0; e < epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(),
                                       start + static_cast<std::size_t>(batch_size));
      LabeledBatch batch;
      batch.inputs.reserve(end - start);
      batch.targets.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const auto& ex = shard.examples[order[i]];
        batch.inputs.emplace_back(ex.features);
        std::vector<double> onehot(classes, 0.0);
        onehot[ex.label] = 1.0;
        batch.targets.push_back(std::move(onehot));
      }
      const auto bp = backprop(model, arch, batch, LossKind::CrossEntropyHard);
      loss_sum += bp.mean_loss * static_cast<double>(batch.size());
      example_count += batch.size();
      optimizer_step(opt, model, bp.grads);
    }
  }
  if (mean_loss_out) {
    *mean_loss_out = example_count ? loss_sum / static_cast<double>(example_count) : 0.0;
  }
  return model;
}

ParameterSet aggregate(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw DomainError("aggregate: empty update list");
  for (const auto& u : updates) {
    if (!u.params.same_shape(updates.front().params)) {
      throw ShapeError("aggregate: parameter shape mismatch");
    }
  }
  std::uint64_t total = 0;
  for (const auto& u : updates) total += u.num_examples;
  if (total == 0) throw DomainError("aggregate: all client weights are zero");

  const bool all_identical = std::all_of(
      updates.begin() + 1, updates.end(),
      [&](const ClientUpdate& u) { return u.params == updates.front().params; });
  if (all_identical) return updates.front().params;

  std::vector<double> weights(updates.size());
  for (std::size_t k = 0; k < updates.size(); ++k) {
    weights[k] = static_cast<double>(updates[k].num_examples) /
                 static_cast<double>(total);
  }

  ParameterSet out = updates.front().params;
  std::vector<double> terms(updates.size());
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    auto& layer = out.layers[l];
    const auto combine = [&](auto member, std::size_t i) {
      for (std::size_t k = 0; k < updates.size(); ++k) {
        terms[k] = weights[k] * (updates[k].params.layers[l].*member)[i];
      }
      // -0.0 sorts before +0.0 so the summation order is a total order.
      std::sort(terms.begin(), terms.end(), [](double a, double b) {
        if (a < b) return true;
        if (b < a) return false;
        return std::signbit(a) && !std::signbit(b);
      });
      double acc = 0.0;
      for (double t : terms) acc += t;
      return acc;
    };
    for (std::size_t i = 0; i < layer.weights.size(); ++i) {
      layer.weights[i] = combine(&LayerParams::weights, i);
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      layer.bias[i] = combine(&LayerParams::bias, i);
    }
  }
  return out;
}

namespace detail {

RoundReport fedavg_round(FederationState& state, const FederationData& fed,
                         const MlpArchitecture& arch, const FederationConfig& cfg,
                         const std::set<std::uint32_t>& exclude,
                         bool parallel_clients) {
  std::vector<std::uint32_t> participants;
  for (std::uint32_t k = 0; k < fed.num_clients(); ++k) {
    if (!exclude.contains(k)) participants.push_back(k);
  }
  if (participants.empty()) throw DomainError("fedavg_round: all clients excluded");

  const double lr = cfg.client_lr *
                    std::pow(cfg.lr_decay, static_cast<double>(state.train_rounds));

  std::vector<ClientUpdate> updates(participants.size());
  std::vector<double> losses(participants.size(), 0.0);

  const auto train_one = [&](std::size_t pi) {
    const std::uint32_t k = participants[pi];
    fed.note_shard_read(k);
    RngStream rng(mix_seed(state.seed, StreamTag::LocalTrain, state.round, k));
    updates[pi].params =
        local_train(state.global, arch, fed.client_shards[k], cfg.local_epochs,
                    lr, cfg.batch_size, rng, &losses[pi]);
    updates[pi].num_examples = fed.client_shards[k].size();
  };

  if (parallel_clients && participants.size() > 1) {
#pragma omp parallel for schedule(static)
    for (long long pi = 0; pi < static_cast<long long>(participants.size()); ++pi) {
      train_one(static_cast<std::size_t>(pi));
    }
  } else {
    for (std::size_t pi = 0; pi < participants.size(); ++pi) train_one(pi);
  }

  ParameterSet averaged = aggregate(updates);
  if (cfg.server_lr == 1.0) {
    state.global = std::move(averaged);
  } else {
    for (std::size_t l = 0; l < state.global.layers.size(); ++l) {
      auto& g = state.global.layers[l];
      const auto& a = averaged.layers[l];
      for (std::size_t i = 0; i < g.weights.size(); ++i) {
        g.weights[i] += cfg.server_lr * (a.weights[i] - g.weights[i]);
      }
      for (std::size_t i = 0; i < g.bias.size(); ++i) {
        g.bias[i] += cfg.server_lr * (a.bias[i] - g.bias[i]);
      }
    }
  }

  const std::uint64_t model_bytes = serialized_size(state.global);
  const std::uint64_t round_bytes = 2 * model_bytes * participants.size();
  state.bytes_down += model_bytes * participants.size();
  state.bytes_up += model_bytes * participants.size();
  state.round += 1;
  state.train_rounds += 1;

  RoundReport report;
  report.round = state.round;
  report.participants = std::move(participants);
  report.client_mean_loss = std::move(losses);
  report.test_accuracy = accuracy(state.global, arch, fed.test_set);
  report.bytes = round_bytes;
  return report;
}

}  // namespace detail

std::vector<RoundReport> run_fedavg(FederationState& state,
                                    const FederationData& fed,
                                    const MlpArchitecture& arch,
                                    const FederationConfig& cfg,
                                    std::uint32_t rounds,
                                    const std::set<std::uint32_t>& exclude) {
  cfg.validate();
  if (rounds < 1) throw DomainError("run_fedavg: rounds must be >= 1");
  std::vector<RoundReport> history;
  history.reserve(rounds);
  const bool parallel = exec::parallel_enabled();
  for (std::uint32_t t = 0; t < rounds; ++t) {
    history.push_back(detail::fedavg_round(state, fed, arch, cfg, exclude, parallel));
  }
  return history;
}

void unlearning_round(FederationState& state, const ParameterSet& unlearned,
                      std::uint32_t /*client*/) {
  if (!state.global.same_shape(unlearned)) {
    throw ShapeError("unlearning_round: unlearned model shape mismatch");
  }
  const std::uint64_t model_bytes = serialized_size(state.global);
  state.global = unlearned;
  state.bytes_down += model_bytes;
  state.bytes_up += model_bytes;
  state.round += 1;
}

RecoveryResult recover(FederationState& state, const FederationData& fed,
                       const MlpArchitecture& arch, const FederationConfig& cfg,
                       const std::set<std::uint32_t>& exclude,
                       double target_test_acc, std::uint32_t max_rounds) {
  cfg.validate();
  if (max_rounds < 1) throw DomainError("recover: max_rounds must be >= 1");
  if (!std::isfinite(target_test_acc)) {
    throw DomainError("recover: target accuracy must be finite");
  }

  RecoveryResult result;
  if (accuracy(state.global, arch, fed.test_set) >= target_test_acc) {
    result.converged = true;
    result.rounds = 0;
    return result;
  }
  const bool parallel = exec::parallel_enabled();
  for (std::uint32_t r = 1; r <= max_rounds; ++r) {
    result.history.push_back(
        detail::fedavg_round(state, fed, arch, cfg, exclude, parallel));
    if (result.history.back().test_accuracy >= target_test_acc) {
      result.converged = true;
      result.rounds = r;
      return result;
    }
  }
  result.converged = false;
  result.rounds = max_rounds;
  return result;
}

}  // namespace fedquit
