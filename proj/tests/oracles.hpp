#pragma once

// Test-only oracles, written independently of the library's forward/backprop
// paths: a long-double forward pass, a long-double loss evaluation, central
// finite differences, and a nearest-mean classifier.

#include <cmath>
#include <span>
#include <vector>

#include "fedquit/data.hpp"
#include "fedquit/nn.hpp"

namespace oracle {

using fedquit::Activation;
using fedquit::Dataset;
using fedquit::GradientSet;
using fedquit::LabeledBatch;
using fedquit::LossKind;
using fedquit::MlpArchitecture;
using fedquit::ParameterSet;

inline std::vector<long double> forward_ld(const ParameterSet& params,
                                           const MlpArchitecture& arch,
                                           std::span<const double> x) {
  std::vector<long double> a(x.begin(), x.end());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    std::vector<long double> z(layer.out, 0.0L);
    for (std::uint32_t r = 0; r < layer.out; ++r) {
      long double acc = layer.bias[r];
      for (std::uint32_t c = 0; c < layer.in; ++c) {
        acc += static_cast<long double>(
                   layer.weights[static_cast<std::size_t>(r) * layer.in + c]) *
               a[c];
      }
      z[r] = acc;
    }
    if (l + 1 == params.layers.size()) return z;
    a.resize(layer.out);
    for (std::uint32_t r = 0; r < layer.out; ++r) {
      a[r] = arch.hidden_activation == Activation::ReLU
                 ? (z[r] > 0.0L ? z[r] : 0.0L)
                 : std::tanh(z[r]);
    }
  }
  return a;
}

inline std::vector<long double> softmax_ld(const std::vector<long double>& z,
                                           long double tau) {
  long double zmax = z.front();
  for (const auto v : z) zmax = std::max(zmax, v);
  std::vector<long double> p(z.size());
  long double sum = 0.0L;
  for (std::size_t i = 0; i < z.size(); ++i) {
    p[i] = std::exp((z[i] - zmax) / tau);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

inline long double example_loss_ld(const ParameterSet& params,
                                   const MlpArchitecture& arch,
                                   std::span<const double> x,
                                   const std::vector<double>& target,
                                   LossKind kind, double tau) {
  const auto p = softmax_ld(forward_ld(params, arch, x), tau);
  long double loss = 0.0L;
  for (std::size_t c = 0; c < p.size(); ++c) {
    const long double t = target[c];
    const long double pc = std::max(p[c], static_cast<long double>(1e-12));
    if (kind == LossKind::CrossEntropyHard) {
      if (t != 0.0L) loss -= t * std::log(pc);
    } else {
      if (t > 0.0L) loss += t * (std::log(t) - std::log(pc));
    }
  }
  return loss;
}

inline double batch_loss(const ParameterSet& params, const MlpArchitecture& arch,
                         const LabeledBatch& batch, LossKind kind, double tau) {
  long double sum = 0.0L;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    sum += example_loss_ld(params, arch, batch.inputs[i], batch.targets[i],
                           kind, tau);
  }
  return static_cast<double>(sum / static_cast<long double>(batch.size()));
}

// Central finite differences of the mean batch loss over every parameter.
inline GradientSet fd_gradient(const ParameterSet& params,
                               const MlpArchitecture& arch,
                               const LabeledBatch& batch, LossKind kind,
                               double tau, double h = 1e-5) {
  GradientSet grads = ParameterSet::zeros(arch);
  ParameterSet probe = params;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto diff = [&](std::vector<double>& pvals, std::vector<double>& gvals) {
      for (std::size_t i = 0; i < pvals.size(); ++i) {
        const double orig = pvals[i];
        pvals[i] = orig + h;
        const double up = batch_loss(probe, arch, batch, kind, tau);
        pvals[i] = orig - h;
        const double down = batch_loss(probe, arch, batch, kind, tau);
        pvals[i] = orig;
        gvals[i] = (up - down) / (2.0 * h);
      }
    };
    diff(probe.layers[l].weights, grads.layers[l].weights);
    diff(probe.layers[l].bias, grads.layers[l].bias);
  }
  return grads;
}

// Largest normalized deviation between two gradient sets.
inline double max_grad_error(const GradientSet& a, const GradientSet& b) {
  double worst = 0.0;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto scan = [&](const std::vector<double>& x, const std::vector<double>& y) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double err = std::abs(x[i] - y[i]) /
                           std::max({std::abs(x[i]), std::abs(y[i]), 1e-3});
        worst = std::max(worst, err);
      }
    };
    scan(a.layers[l].weights, b.layers[l].weights);
    scan(a.layers[l].bias, b.layers[l].bias);
  }
  return worst;
}

inline double grad_norm(const GradientSet& g) {
  double sum = 0.0;
  for (const auto& layer : g.layers) {
    for (double w : layer.weights) sum += w * w;
    for (double b : layer.bias) sum += b * b;
  }
  return std::sqrt(sum);
}

// Nearest class mean on the training set itself.
inline double nearest_mean_accuracy(const Dataset& data) {
  std::vector<std::vector<double>> means(data.num_classes,
                                         std::vector<double>(data.feature_dim, 0.0));
  std::vector<std::size_t> counts(data.num_classes, 0);
  for (const auto& ex : data.examples) {
    for (std::size_t j = 0; j < ex.features.size(); ++j) {
      means[ex.label][j] += ex.features[j];
    }
    ++counts[ex.label];
  }
  for (std::uint32_t c = 0; c < data.num_classes; ++c) {
    for (auto& m : means[c]) m /= static_cast<double>(counts[c]);
  }
  std::size_t hits = 0;
  for (const auto& ex : data.examples) {
    std::uint32_t best = 0;
    double best_d = 0.0;
    for (std::uint32_t c = 0; c < data.num_classes; ++c) {
      double d = 0.0;
      for (std::size_t j = 0; j < ex.features.size(); ++j) {
        const double diff = ex.features[j] - means[c][j];
        d += diff * diff;
      }
      if (c == 0 || d < best_d) {
        best_d = d;
        best = c;
      }
    }
    hits += (best == ex.label);
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace oracle
