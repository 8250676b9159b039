#pragma once

// Seeded random streams with hand-rolled distributions. std::mt19937_64 has a
// standard-specified output sequence, but the standard <random> distributions
// do not, so every draw here is implemented explicitly to make results
// reproducible bit-for-bit across compilers and standard libraries.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "fedquit/errors.hpp"

namespace fedquit {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent sub-seed from a base seed and up to three tags.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t a = 0,
                              std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = base;
  std::uint64_t out = splitmix64(s);
  s ^= a;
  out ^= splitmix64(s);
  s ^= b;
  out ^= splitmix64(s);
  s ^= c;
  out ^= splitmix64(s);
  return out;
}

// Tags for deriving purpose-specific streams from one master seed.
enum class StreamTag : std::uint64_t {
  DatasetTrain = 1,
  DatasetTest = 2,
  Partition = 3,
  WeightInit = 4,
  LocalTrain = 5,
  Unlearn = 6,
  MiaSubsample = 7,
  Finetune = 8,
};

inline std::uint64_t mix_seed(std::uint64_t base, StreamTag tag,
                              std::uint64_t a = 0, std::uint64_t b = 0) {
  return mix_seed(base, static_cast<std::uint64_t>(tag), a, b);
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Unbiased integer in [0, bound) via rejection sampling.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) throw DomainError("RngStream::below: bound must be > 0");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % bound;
  }

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller; the second deviate is discarded to keep the stream stateless.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Marsaglia-Tsang gamma sampler, unit scale.
  double gamma(double shape) {
    if (!(shape > 0.0)) throw DomainError("RngStream::gamma: shape must be > 0");
    if (shape < 1.0) {
      const double u = uniform01();
      return gamma(shape + 1.0) * std::pow(u > 0.0 ? u : 0x1.0p-53, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
        return d * v;
      }
    }
  }

  // Symmetric Dirichlet(alpha) over k categories.
  std::vector<double> dirichlet(double alpha, std::size_t k) {
    if (k == 0) throw DomainError("RngStream::dirichlet: k must be > 0");
    std::vector<double> draws(k);
    double total = 0.0;
    for (auto& d : draws) {
      d = gamma(alpha);
      total += d;
    }
    if (total <= 0.0) {
      // All gammas underflowed (tiny alpha); fall back to a single winner.
      draws.assign(k, 0.0);
      draws[below(k)] = 1.0;
      return draws;
    }
    for (auto& d : draws) d /= total;
    return draws;
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace fedquit
