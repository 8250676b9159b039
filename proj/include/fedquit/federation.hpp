#pragma once

// FedAvg rounds, weighted aggregation, byte accounting, the special
// single-client unlearning round, and post-unlearning recovery.

#include <cstdint>
#include <optional>
#include <set>
#include <vector>

#include "fedquit/data.hpp"
#include "fedquit/nn.hpp"
#include "fedquit/rng.hpp"

namespace fedquit {

struct FederationConfig {
  std::uint32_t rounds = 1;        // T
  std::uint32_t local_epochs = 1;  // E
  double client_lr = 0.1;
  double lr_decay = 1.0;  // per-round multiplicative, in (0, 1]
  std::uint32_t batch_size = 32;
  double server_lr = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RoundReport {
  std::uint64_t round = 0;  // global round index after this round
  std::vector<std::uint32_t> participants;
  std::vector<double> client_mean_loss;  // aligned with participants
  double test_accuracy = 0.0;
  std::uint64_t bytes = 0;  // exchanged this round

  double mean_loss() const;
};

struct FederationState {
  ParameterSet global;
  std::uint64_t round = 0;        // protocol rounds, including the special round
  std::uint64_t train_rounds = 0; // FedAvg rounds; drives the lr decay schedule
  std::uint64_t bytes_down = 0;
  std::uint64_t bytes_up = 0;
  std::uint64_t seed = 0;         // master seed for per-(round, client) streams

  std::uint64_t bytes_total() const { return bytes_down + bytes_up; }
};

// E epochs of seeded-shuffled minibatch SGD with hard-label cross-entropy.
// Returns the updated parameters; mean_loss_out (if given) receives the mean
// per-example loss across all processed batches.
ParameterSet local_train(const ParameterSet& params, const MlpArchitecture& arch,
                         const Dataset& shard, std::uint32_t epochs, double lr,
                         std::uint32_t batch_size, RngStream& rng,
                         double* mean_loss_out = nullptr);

struct ClientUpdate {
  ParameterSet params;
  std::uint64_t num_examples = 0;
};

// Coordinate-wise weighted mean with weights n_k / sum(n_k). Identical inputs
// pass through unchanged, and per-coordinate terms are summed in sorted order
// so the result is invariant under permutations of the update list.
ParameterSet aggregate(const std::vector<ClientUpdate>& updates);

// Runs `rounds` FedAvg rounds on `state`, skipping excluded clients entirely.
std::vector<RoundReport> run_fedavg(FederationState& state,
                                    const FederationData& fed,
                                    const MlpArchitecture& arch,
                                    const FederationConfig& cfg,
                                    std::uint32_t rounds,
                                    const std::set<std::uint32_t>& exclude = {});

// The special round: the server swaps in the client-produced unlearned model.
// Costs exactly one download plus one upload of a serialized parameter set.
void unlearning_round(FederationState& state, const ParameterSet& unlearned,
                      std::uint32_t client);

struct RecoveryResult {
  bool converged = false;
  std::uint32_t rounds = 0;  // smallest r with test accuracy >= target
  std::vector<RoundReport> history;
};

// Resumes FedAvg without the excluded clients until the global model's test
// accuracy reaches `target_test_acc` (r = 0 if already there).
RecoveryResult recover(FederationState& state, const FederationData& fed,
                       const MlpArchitecture& arch, const FederationConfig& cfg,
                       const std::set<std::uint32_t>& exclude,
                       double target_test_acc, std::uint32_t max_rounds);

namespace detail {
// One FedAvg round; exposed so that the serial and OpenMP client loops can be
// compared directly in tests.
RoundReport fedavg_round(FederationState& state, const FederationData& fed,
                         const MlpArchitecture& arch, const FederationConfig& cfg,
                         const std::set<std::uint32_t>& exclude,
                         bool parallel_clients);
}  // namespace detail

}  // namespace fedquit
