#include "fedquit/evaluation.hpp"

#include <algorithm>
#include <cmath>

#include "fedquit/parallel.hpp"
#include "fedquit/rng.hpp"

namespace fedquit {

namespace {

std::uint32_t argmax_lowest(const std::vector<double>& v) {
  std::uint32_t best = 0;
  for (std::uint32_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

template <typename T, typename Fn>
std::vector<T> map_examples_serial(const Dataset& data, const Fn& fn) {
  std::vector<T> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = fn(data.examples[i]);
  return out;
}

template <typename T, typename Fn>
std::vector<T> map_examples_omp(const Dataset& data, const Fn& fn) {
  std::vector<T> out(data.size());
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(data.size()); ++i) {
    out[static_cast<std::size_t>(i)] = fn(data.examples[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace

namespace detail {

std::vector<double> confidences_serial(const ParameterSet& params,
                                       const MlpArchitecture& arch,
                                       const Dataset& data) {
  return map_examples_serial<double>(data, [&](const LabeledExample& ex) {
    const auto p = softmax(forward(params, arch, ex.features));
    return *std::max_element(p.begin(), p.end());
  });
}

std::vector<double> confidences_omp(const ParameterSet& params,
                                    const MlpArchitecture& arch,
                                    const Dataset& data) {
  return map_examples_omp<double>(data, [&](const LabeledExample& ex) {
    const auto p = softmax(forward(params, arch, ex.features));
    return *std::max_element(p.begin(), p.end());
  });
}

std::vector<double> losses_serial(const ParameterSet& params,
                                  const MlpArchitecture& arch,
                                  const Dataset& data) {
  return map_examples_serial<double>(data, [&](const LabeledExample& ex) {
    const auto p = softmax(forward(params, arch, ex.features));
    return -std::log(std::max(p[ex.label], kProbFloor));
  });
}

std::vector<double> losses_omp(const ParameterSet& params,
                               const MlpArchitecture& arch,
                               const Dataset& data) {
  return map_examples_omp<double>(data, [&](const LabeledExample& ex) {
    const auto p = softmax(forward(params, arch, ex.features));
    return -std::log(std::max(p[ex.label], kProbFloor));
  });
}

std::vector<std::uint8_t> correct_serial(const ParameterSet& params,
                                         const MlpArchitecture& arch,
                                         const Dataset& data) {
  return map_examples_serial<std::uint8_t>(data, [&](const LabeledExample& ex) {
    return static_cast<std::uint8_t>(
        argmax_lowest(forward(params, arch, ex.features)) == ex.label);
  });
}

std::vector<std::uint8_t> correct_omp(const ParameterSet& params,
                                      const MlpArchitecture& arch,
                                      const Dataset& data) {
  return map_examples_omp<std::uint8_t>(data, [&](const LabeledExample& ex) {
    return static_cast<std::uint8_t>(
        argmax_lowest(forward(params, arch, ex.features)) == ex.label);
  });
}

}  // namespace detail

double accuracy(const ParameterSet& params, const MlpArchitecture& arch,
                const Dataset& data) {
  if (data.empty()) throw DomainError("accuracy: empty dataset");
  const auto correct = exec::parallel_enabled()
                           ? detail::correct_omp(params, arch, data)
                           : detail::correct_serial(params, arch, data);
  std::size_t hits = 0;
  for (auto c : correct) hits += c;
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

std::vector<double> per_example_losses(const ParameterSet& params,
                                       const MlpArchitecture& arch,
                                       const Dataset& data) {
  if (data.empty()) throw DomainError("per_example_losses: empty dataset");
  return exec::parallel_enabled() ? detail::losses_omp(params, arch, data)
                                  : detail::losses_serial(params, arch, data);
}

std::vector<double> per_example_confidences(const ParameterSet& params,
                                            const MlpArchitecture& arch,
                                            const Dataset& data) {
  if (data.empty()) throw DomainError("per_example_confidences: empty dataset");
  return exec::parallel_enabled() ? detail::confidences_omp(params, arch, data)
                                  : detail::confidences_serial(params, arch, data);
}

double avg_train_loss(const ParameterSet& params, const MlpArchitecture& arch,
                      const Dataset& data) {
  if (data.empty()) throw DomainError("avg_train_loss: empty dataset");
  const auto losses = per_example_losses(params, arch, data);
  double sum = 0.0;
  for (double l : losses) sum += l;
  return sum / static_cast<double>(losses.size());
}

namespace {

// Subsample `values` down to `target` entries with a seeded shuffle.
std::vector<double> subsample(std::vector<double> values, std::size_t target,
                              RngStream& rng) {
  if (values.size() <= target) return values;
  std::vector<std::size_t> order(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<double> out(target);
  for (std::size_t i = 0; i < target; ++i) out[i] = values[order[i]];
  return out;
}

}  // namespace

MiaPredictor fit_mia_song(const ParameterSet& params, const MlpArchitecture& arch,
                          const Dataset& seen, const Dataset& unseen,
                          std::uint64_t seed) {
  if (seen.empty() || unseen.empty()) {
    throw DomainError("fit_mia_song: empty seen/unseen split");
  }
  auto seen_conf = per_example_confidences(params, arch, seen);
  auto unseen_conf = per_example_confidences(params, arch, unseen);

  RngStream rng(mix_seed(seed, StreamTag::MiaSubsample));
  const std::size_t m = std::min(seen_conf.size(), unseen_conf.size());
  seen_conf = subsample(std::move(seen_conf), m, rng);
  unseen_conf = subsample(std::move(unseen_conf), m, rng);

  std::vector<double> candidates;
  candidates.reserve(2 * m);
  candidates.insert(candidates.end(), seen_conf.begin(), seen_conf.end());
  candidates.insert(candidates.end(), unseen_conf.begin(), unseen_conf.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  double best_t = candidates.front();
  double best_ba = -1.0;
  for (const double t : candidates) {
    std::size_t tp = 0, tn = 0;
    for (double c : seen_conf) tp += (c >= t);
    for (double c : unseen_conf) tn += (c < t);
    const double ba = 0.5 * (static_cast<double>(tp) / m +
                             static_cast<double>(tn) / m);
    if (ba > best_ba) {
      best_ba = ba;
      best_t = t;
    }
  }

  MiaPredictor pred;
  pred.kind = MiaKind::ConfidenceThreshold;
  pred.threshold = best_t;
  pred.seen_size = m;
  pred.unseen_size = m;
  pred.train_balanced_accuracy = best_ba;
  return pred;
}

MiaPredictor fit_mia_yeom(const ParameterSet& params, const MlpArchitecture& arch,
                          const Dataset& retain) {
  MiaPredictor pred;
  pred.kind = MiaKind::LossThreshold;
  pred.threshold = avg_train_loss(params, arch, retain);
  pred.seen_size = retain.size();
  return pred;
}

double mia_rate(const MiaPredictor& predictor, const ParameterSet& params,
                const MlpArchitecture& arch, const Dataset& target) {
  if (target.empty()) throw DomainError("mia_rate: empty target dataset");
  std::size_t members = 0;
  if (predictor.kind == MiaKind::ConfidenceThreshold) {
    const auto conf = per_example_confidences(params, arch, target);
    for (double c : conf) members += (c >= predictor.threshold);
  } else {
    const auto losses = per_example_losses(params, arch, target);
    for (double l : losses) members += (l < predictor.threshold);
  }
  return static_cast<double>(members) / static_cast<double>(target.size());
}

}  // namespace fedquit
