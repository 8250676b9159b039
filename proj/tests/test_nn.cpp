#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "fedquit/nn.hpp"
#include "fedquit/rng.hpp"
#include "oracles.hpp"

using namespace fedquit;

namespace {

MlpArchitecture arch_of(std::vector<std::uint32_t> sizes,
                        Activation act = Activation::Tanh) {
  MlpArchitecture a;
  a.layer_sizes = std::move(sizes);
  a.hidden_activation = act;
  return a;
}

std::vector<double> random_input(RngStream& rng, std::size_t d) {
  std::vector<double> x(d);
  for (auto& v : x) v = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("forward: zero parameters give zero logits") {
  const auto arch = arch_of({3, 4, 2});
  const auto params = ParameterSet::zeros(arch);
  const auto z = forward(params, arch, std::vector<double>{1.0, -2.0, 0.5});
  REQUIRE(z.size() == 2);
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.0);
}

TEST_CASE("forward: single identity layer maps input to logits") {
  const auto arch = arch_of({2, 2});
  auto params = ParameterSet::zeros(arch);
  params.layers[0].weights = {1.0, 0.0, 0.0, 1.0};
  const auto z = forward(params, arch, std::vector<double>{1.0, 2.0});
  CHECK(z[0] == 1.0);
  CHECK(z[1] == 2.0);
}

TEST_CASE("forward: matches the long-double oracle on random nets") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto act = seed % 2 ? Activation::Tanh : Activation::ReLU;
    const auto arch = arch_of({4, 6, 3}, act);
    const auto params = ParameterSet::glorot(arch, seed);
    RngStream rng(mix_seed(seed, 77));
    const auto x = random_input(rng, 4);
    const auto z = forward(params, arch, x);
    const auto zo = oracle::forward_ld(params, arch, x);
    for (std::size_t c = 0; c < z.size(); ++c) {
      CHECK(std::abs(z[c] - static_cast<double>(zo[c])) <=
            1e-12 * std::max(1.0, std::abs(static_cast<double>(zo[c]))));
    }
  }
}

TEST_CASE("forward: dimension mismatch throws") {
  const auto arch = arch_of({3, 2});
  const auto params = ParameterSet::zeros(arch);
  CHECK_THROWS_AS(forward(params, arch, std::vector<double>{1.0}), ShapeError);
  const auto other = ParameterSet::zeros(arch_of({4, 2}));
  CHECK_THROWS_AS(forward(other, arch, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST_CASE("softmax: uniform on equal logits") {
  const auto p = softmax(std::vector<double>{0.0, 0.0, 0.0});
  CHECK(p[0] == 1.0 / 3.0);
  CHECK(p[1] == 1.0 / 3.0);
  CHECK(p[2] == 1.0 / 3.0);
}

TEST_CASE("softmax: frozen values for [1,2,3]") {
  const auto p = softmax(std::vector<double>{1.0, 2.0, 3.0});
  CHECK(p[0] == doctest::Approx(0.090030573170380457998).epsilon(1e-9));
  CHECK(p[1] == doctest::Approx(0.24472847105479765247).epsilon(1e-9));
  CHECK(p[2] == doctest::Approx(0.66524095577482188953).epsilon(1e-9));
}

TEST_CASE("softmax: large logits do not overflow") {
  const auto p = softmax(std::vector<double>{1000.0, 0.0, 0.0});
  CHECK(std::isfinite(p[0]));
  CHECK(std::abs(p[0] - 1.0) <= 1e-9);
  CHECK(p[1] <= 1e-9);
  CHECK(is_prob_vector(p));
}

TEST_CASE("softmax: non-positive temperature is rejected") {
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0, 2.0}, 0.0), DomainError);
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0, 2.0}, -1.0), DomainError);
}

TEST_CASE("softmax: valid distribution, shift invariance, argmax preserved") {
  RngStream rng(42);
  for (int it = 0; it < 200; ++it) {
    const std::size_t n = 2 + rng.below(6);
    std::vector<double> z(n);
    for (auto& v : z) v = rng.uniform(-20.0, 20.0);
    for (const double tau : {0.25, 1.0, 3.0}) {
      const auto p = softmax(z, tau);
      CHECK(is_prob_vector(p));
      std::size_t zmax = 0, pmax = 0;
      for (std::size_t i = 1; i < n; ++i) {
        if (z[i] > z[zmax]) zmax = i;
        if (p[i] > p[pmax]) pmax = i;
      }
      CHECK(zmax == pmax);
      auto shifted = z;
      for (auto& v : shifted) v += 7.5;
      const auto q = softmax(shifted, tau);
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(std::abs(p[i] - q[i]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("cross_entropy: perfect one-hot prediction costs zero") {
  CHECK(cross_entropy(std::vector<double>{0.0, 1.0},
                      std::vector<double>{0.0, 1.0}) == 0.0);
}

TEST_CASE("cross_entropy: frozen natural-log values") {
  const double ln2 = 0.69314718055994530942;
  CHECK(cross_entropy(std::vector<double>{1.0, 0.0},
                      std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(ln2).epsilon(1e-12));
  CHECK(cross_entropy(std::vector<double>{0.5, 0.5},
                      std::vector<double>{0.5, 0.5}) ==
        doctest::Approx(ln2).epsilon(1e-12));
}

TEST_CASE("cross_entropy: length mismatch throws") {
  CHECK_THROWS_AS(cross_entropy(std::vector<double>{1.0},
                                std::vector<double>{0.5, 0.5}),
                  ShapeError);
}

TEST_CASE("kl_divergence: zero on identical distributions") {
  RngStream rng(3);
  for (int it = 0; it < 50; ++it) {
    std::vector<double> z(4);
    for (auto& v : z) v = rng.uniform(-5.0, 5.0);
    const auto p = softmax(z);
    CHECK(kl_divergence(p, p) == 0.0);
  }
}

TEST_CASE("kl_divergence: frozen value and closed forms") {
  CHECK(kl_divergence(std::vector<double>{0.5, 0.5},
                      std::vector<double>{0.9, 0.1}) ==
        doctest::Approx(0.51082562376599068321).epsilon(1e-9));
  const double ln3 = 1.0986122886681096914;
  CHECK(kl_divergence(std::vector<double>{1.0, 0.0, 0.0},
                      std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}) ==
        doctest::Approx(ln3).epsilon(1e-12));
  CHECK_THROWS_AS(kl_divergence(std::vector<double>{1.0},
                                std::vector<double>{0.5, 0.5}),
                  ShapeError);
}

TEST_CASE("kl_divergence: non-negative on random distribution pairs") {
  RngStream rng(9);
  for (int it = 0; it < 500; ++it) {
    const std::size_t n = 2 + rng.below(5);
    std::vector<double> a(n), b(n);
    for (auto& v : a) v = rng.uniform(-4.0, 4.0);
    for (auto& v : b) v = rng.uniform(-4.0, 4.0);
    CHECK(kl_divergence(softmax(a), softmax(b)) >= -1e-15);
  }
}

namespace {

LabeledBatch make_batch(const MlpArchitecture& arch, RngStream& rng,
                        std::size_t n, std::vector<std::vector<double>>& keep,
                        bool teacher_targets, const ParameterSet& params) {
  LabeledBatch batch;
  keep.clear();
  keep.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    keep.push_back(random_input(rng, arch.input_dim()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    batch.inputs.emplace_back(keep[i]);
    if (teacher_targets) {
      auto z = forward(params, arch, keep[i]);
      for (auto& v : z) v += rng.uniform(-0.5, 0.5);
      batch.targets.push_back(softmax(z));
    } else {
      std::vector<double> onehot(arch.num_classes(), 0.0);
      onehot[rng.below(arch.num_classes())] = 1.0;
      batch.targets.push_back(std::move(onehot));
    }
  }
  return batch;
}

}  // namespace

TEST_CASE("backprop: zero gradient when KL targets equal predictions") {
  const auto arch = arch_of({3, 5, 4});
  const auto params = ParameterSet::glorot(arch, 17);
  RngStream rng(18);
  LabeledBatch batch;
  std::vector<std::vector<double>> keep;
  for (std::size_t i = 0; i < 6; ++i) keep.push_back(random_input(rng, 3));
  for (std::size_t i = 0; i < 6; ++i) {
    batch.inputs.emplace_back(keep[i]);
    batch.targets.push_back(softmax(forward(params, arch, keep[i])));
  }
  const auto r = backprop(params, arch, batch, LossKind::KLToTeacher);
  CHECK(oracle::grad_norm(r.grads) <= 1e-9);
  CHECK(r.mean_loss <= 1e-12);
}

TEST_CASE("backprop: single example matches central finite differences") {
  const auto arch = arch_of({2, 4, 3});
  const auto params = ParameterSet::glorot(arch, 5);
  RngStream rng(6);
  std::vector<std::vector<double>> keep;
  for (const auto kind : {LossKind::CrossEntropyHard, LossKind::KLToTeacher}) {
    const auto batch = make_batch(arch, rng, 1, keep,
                                  kind == LossKind::KLToTeacher, params);
    const auto r = backprop(params, arch, batch, kind);
    const auto fd = oracle::fd_gradient(params, arch, batch, kind, 1.0);
    CHECK(oracle::max_grad_error(r.grads, fd) < 1e-4);
    CHECK(r.mean_loss ==
          doctest::Approx(oracle::batch_loss(params, arch, batch, kind, 1.0))
              .epsilon(1e-10));
  }
}

TEST_CASE("backprop: duplicated example equals the singleton batch") {
  const auto arch = arch_of({2, 3, 2});
  const auto params = ParameterSet::glorot(arch, 8);
  const std::vector<double> x{0.3, -0.7};
  LabeledBatch one, two;
  one.inputs.emplace_back(x);
  one.targets.push_back({1.0, 0.0});
  two.inputs.emplace_back(x);
  two.inputs.emplace_back(x);
  two.targets.push_back({1.0, 0.0});
  two.targets.push_back({1.0, 0.0});
  const auto r1 = backprop(params, arch, one, LossKind::CrossEntropyHard);
  const auto r2 = backprop(params, arch, two, LossKind::CrossEntropyHard);
  CHECK(r1.grads == r2.grads);
  CHECK(r1.mean_loss == r2.mean_loss);
}

TEST_CASE("backprop: empty batch throws, repeated calls are bitwise equal") {
  const auto arch = arch_of({2, 2});
  const auto params = ParameterSet::glorot(arch, 1);
  CHECK_THROWS_AS(backprop(params, arch, LabeledBatch{}, LossKind::CrossEntropyHard),
                  DomainError);
  RngStream rng(2);
  std::vector<std::vector<double>> keep;
  const auto batch = make_batch(arch, rng, 40, keep, false, params);
  const auto a = backprop(params, arch, batch, LossKind::CrossEntropyHard);
  const auto b = backprop(params, arch, batch, LossKind::CrossEntropyHard);
  CHECK(a.grads == b.grads);
  CHECK(a.mean_loss == b.mean_loss);
}

TEST_CASE("backprop: finite differences across random nets and both losses") {
  int checked = 0;
  for (std::uint64_t seed = 1; checked < 100; ++seed) {
    RngStream rng(mix_seed(seed, 1234));
    const std::uint32_t d = 1 + static_cast<std::uint32_t>(rng.below(10));
    const std::uint32_t h1 = 1 + static_cast<std::uint32_t>(rng.below(8));
    const std::uint32_t h2 = 1 + static_cast<std::uint32_t>(rng.below(5));
    const std::uint32_t c = 2 + static_cast<std::uint32_t>(rng.below(4));
    const bool deep = rng.below(2) == 0;
    const auto act = rng.below(2) ? Activation::Tanh : Activation::ReLU;
    const auto arch = deep ? arch_of({d, h1, h2, c}, act) : arch_of({d, h1, c}, act);
    const auto params = ParameterSet::glorot(arch, seed);
    const auto kind = rng.below(2) ? LossKind::KLToTeacher : LossKind::CrossEntropyHard;
    const double tau = rng.below(2) ? 1.0 : 1.7;

    std::vector<std::vector<double>> keep;
    auto batch = make_batch(arch, rng, 3, keep, kind == LossKind::KLToTeacher,
                            params);
    if (act == Activation::ReLU) {
      // Central differences are only a valid oracle away from the ReLU kink;
      // skip draws that land a pre-activation too close to zero.
      bool near_kink = false;
      for (const auto& x : keep) {
        std::vector<double> a(x);
        for (std::size_t l = 0; l + 1 < params.layers.size(); ++l) {
          const auto& layer = params.layers[l];
          std::vector<double> z(layer.out, 0.0);
          for (std::uint32_t r = 0; r < layer.out; ++r) {
            double acc = layer.bias[r];
            for (std::uint32_t cc = 0; cc < layer.in; ++cc) {
              acc += layer.weights[static_cast<std::size_t>(r) * layer.in + cc] * a[cc];
            }
            z[r] = acc;
            if (std::abs(acc) < 1e-3) near_kink = true;
          }
          a.assign(z.size(), 0.0);
          for (std::size_t r = 0; r < z.size(); ++r) a[r] = std::max(z[r], 0.0);
        }
      }
      if (near_kink) continue;
    }

    const auto r = backprop(params, arch, batch, kind, tau);
    const auto fd = oracle::fd_gradient(params, arch, batch, kind, tau);
    const double err = oracle::max_grad_error(r.grads, fd);
    CHECK(err < 1e-4);
    if (err >= 1e-4) {
      std::printf("seed %llu err %g\n", (unsigned long long)seed, err);
    }
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("optimizer: SGD identities") {
  const auto arch = arch_of({2, 3, 2});
  auto params = ParameterSet::glorot(arch, 4);
  const auto before = params;

  auto zero_lr = OptimizerState::sgd(0.0);
  auto grads = ParameterSet::glorot(arch, 5);
  optimizer_step(zero_lr, params, grads);
  CHECK(params == before);

  auto unit = OptimizerState::sgd(1.0);
  grads = params;
  optimizer_step(unit, params, grads);
  for (const auto& layer : params.layers) {
    for (double w : layer.weights) CHECK(w == 0.0);
    for (double b : layer.bias) CHECK(b == 0.0);
  }

  params = before;
  auto sgd = OptimizerState::sgd(0.5);
  optimizer_step(sgd, params, ParameterSet::zeros(arch));
  CHECK(params == before);
}

TEST_CASE("optimizer: first Adam step moves each coordinate by about lr") {
  const auto arch = arch_of({2, 2});
  auto params = ParameterSet::zeros(arch);
  auto grads = ParameterSet::zeros(arch);
  for (auto& layer : grads.layers) {
    for (auto& w : layer.weights) w = 0.5;
    for (auto& b : layer.bias) b = -2.0;
  }
  auto adam = OptimizerState::adam(0.01);
  optimizer_step(adam, params, grads);
  for (const auto& layer : params.layers) {
    for (double w : layer.weights) CHECK(w == doctest::Approx(-0.01).epsilon(1e-6));
    for (double b : layer.bias) CHECK(b == doctest::Approx(0.01).epsilon(1e-6));
  }
  CHECK(adam.step == 1);
}

TEST_CASE("optimizer: shape mismatch throws") {
  const auto arch = arch_of({2, 2});
  auto params = ParameterSet::zeros(arch);
  const auto grads = ParameterSet::zeros(arch_of({3, 2}));
  auto sgd = OptimizerState::sgd(0.1);
  CHECK_THROWS_AS(optimizer_step(sgd, params, grads), ShapeError);
}

TEST_CASE("checkpoint: round trip is bitwise lossless") {
  RngStream rng(77);
  for (int it = 0; it < 20; ++it) {
    std::vector<std::uint32_t> sizes;
    const std::size_t depth = 2 + rng.below(3);
    for (std::size_t i = 0; i < depth; ++i) {
      sizes.push_back(1 + static_cast<std::uint32_t>(rng.below(9)));
    }
    sizes.back() = std::max<std::uint32_t>(sizes.back(), 2);
    const auto arch = arch_of(sizes);
    const auto params = ParameterSet::glorot(arch, rng.next_u64());
    const auto bytes = serialize_parameters(params);
    CHECK(bytes.size() == serialized_size(params));
    const auto back = deserialize_parameters(bytes);
    CHECK(back.layer_sizes == sizes);
    CHECK(back.params == params);
  }
}

TEST_CASE("checkpoint: header layout and corruption errors") {
  const auto arch = arch_of({2, 3, 2});
  const auto params = ParameterSet::glorot(arch, 1);
  auto bytes = serialize_parameters(params);
  // u32 count, then sizes 2, 3, 2 little-endian.
  CHECK(bytes[0] == 3);
  CHECK(bytes[4] == 2);
  CHECK(bytes[8] == 3);
  CHECK(bytes[12] == 2);
  bytes.pop_back();
  CHECK_THROWS_AS(deserialize_parameters(bytes), ParseError);
}

TEST_CASE("architecture and parameter validation") {
  CHECK_THROWS_AS(arch_of({3}).validate(), DomainError);
  CHECK_THROWS_AS(arch_of({3, 1}).validate(), DomainError);
  CHECK_THROWS_AS(arch_of({0, 2}).validate(), DomainError);
  const auto p = ParameterSet::glorot(arch_of({3, 4, 2}), 9);
  CHECK(p.all_finite());
  CHECK(p.num_values() == 3 * 4 + 4 + 4 * 2 + 2);
}
