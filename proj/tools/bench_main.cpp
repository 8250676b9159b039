// Times the OpenMP kernels against their serial reference paths and checks
// that both produce identical bits: batch backprop, dataset evaluation, and
// one full federated round.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>

#include "fedquit/data.hpp"
#include "fedquit/evaluation.hpp"
#include "fedquit/federation.hpp"
#include "fedquit/parallel.hpp"

using namespace fedquit;

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
  const auto t0 = Clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = Clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

struct Workload {
  Dataset train;
  Dataset test;
  MlpArchitecture arch;
  ParameterSet params;
  FederationData fed;
  FederationConfig fed_cfg;
};

Workload make_workload(bool quick) {
  Workload w;
  const std::uint32_t classes = 10;
  const std::uint32_t per_class = quick ? 40 : 400;
  const std::uint32_t dim = 32;
  w.train = generate_blobs(classes, per_class, dim, 0.4, 11);
  w.test = generate_blobs(classes, per_class / 4, dim, 0.4, 12);
  w.arch.layer_sizes = {dim, 64, 32, classes};
  w.params = ParameterSet::glorot(w.arch, 5);
  PartitionSpec spec{PartitionKind::Iid, 1.0, 8, 3};
  w.fed = FederationData(partition(w.train, spec), w.test);
  w.fed_cfg.rounds = 1;
  w.fed_cfg.local_epochs = 1;
  w.fed_cfg.client_lr = 0.05;
  w.fed_cfg.batch_size = 64;
  w.fed_cfg.seed = 99;
  return w;
}

LabeledBatch full_batch(const Dataset& data, std::uint32_t classes) {
  LabeledBatch batch;
  for (const auto& ex : data.examples) {
    batch.inputs.emplace_back(ex.features);
    std::vector<double> onehot(classes, 0.0);
    onehot[ex.label] = 1.0;
    batch.targets.push_back(std::move(onehot));
  }
  return batch;
}

void report(const char* name, double serial_ms, double parallel_ms, bool match) {
  std::printf("%-22s serial %9.3f ms   openmp %9.3f ms   speedup %5.2fx   %s\n",
              name, serial_ms, parallel_ms, serial_ms / parallel_ms,
              match ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  const bool quick = argc > 1 && std::strcmp(argv[1], "--quick") == 0;
  const int reps = quick ? 2 : 10;
  Workload w = make_workload(quick);
  bool all_match = true;

  {
    const auto batch = full_batch(w.train, w.arch.num_classes());
    exec::set_threads(1);
    const auto serial = backprop(w.params, w.arch, batch, LossKind::CrossEntropyHard);
    const double st = time_ms([&] {
      (void)backprop(w.params, w.arch, batch, LossKind::CrossEntropyHard);
    }, reps);
    exec::set_threads(0);
    const auto parallel = backprop(w.params, w.arch, batch, LossKind::CrossEntropyHard);
    const double pt = time_ms([&] {
      (void)backprop(w.params, w.arch, batch, LossKind::CrossEntropyHard);
    }, reps);
    const bool match = serial.grads == parallel.grads &&
                       serial.mean_loss == parallel.mean_loss;
    all_match = all_match && match;
    report("batch backprop", st, pt, match);
  }

  {
    const auto serial = detail::losses_serial(w.params, w.arch, w.train);
    const double st = time_ms([&] {
      (void)detail::losses_serial(w.params, w.arch, w.train);
    }, reps);
    const auto parallel = detail::losses_omp(w.params, w.arch, w.train);
    const double pt = time_ms([&] {
      (void)detail::losses_omp(w.params, w.arch, w.train);
    }, reps);
    const bool match = serial == parallel;
    all_match = all_match && match;
    report("per-example losses", st, pt, match);
  }

  {
    const auto run_round = [&](bool parallel_clients) {
      FederationState state{w.params, 0, 0, 0, 0, w.fed_cfg.seed};
      return detail::fedavg_round(state, w.fed, w.arch, w.fed_cfg, {},
                                  parallel_clients);
    };
    exec::set_threads(1);
    FederationState s1{w.params, 0, 0, 0, 0, w.fed_cfg.seed};
    const auto r1 = detail::fedavg_round(s1, w.fed, w.arch, w.fed_cfg, {}, false);
    const double st = time_ms([&] { (void)run_round(false); }, reps);
    exec::set_threads(0);
    FederationState s2{w.params, 0, 0, 0, 0, w.fed_cfg.seed};
    const auto r2 = detail::fedavg_round(s2, w.fed, w.arch, w.fed_cfg, {}, true);
    const double pt = time_ms([&] { (void)run_round(true); }, reps);
    const bool match = s1.global == s2.global && r1.test_accuracy == r2.test_accuracy;
    all_match = all_match && match;
    report("federated round", st, pt, match);
  }

  return all_match ? 0 : 1;
}
