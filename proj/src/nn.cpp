#include "fedquit/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "fedquit/parallel.hpp"
#include "fedquit/rng.hpp"

namespace fedquit {

void MlpArchitecture::validate() const {
  if (layer_sizes.size() < 2) {
    throw DomainError("MlpArchitecture: need at least input and output layer");
  }
  for (auto s : layer_sizes) {
    if (s < 1) throw DomainError("MlpArchitecture: layer sizes must be >= 1");
  }
  if (layer_sizes.back() < 2) {
    throw DomainError("MlpArchitecture: class count must be >= 2");
  }
}

ParameterSet ParameterSet::zeros(const MlpArchitecture& arch) {
  arch.validate();
  ParameterSet p;
  p.layers.resize(arch.num_layers());
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    auto& layer = p.layers[l];
    layer.in = arch.layer_sizes[l];
    layer.out = arch.layer_sizes[l + 1];
    layer.weights.assign(static_cast<std::size_t>(layer.in) * layer.out, 0.0);
    layer.bias.assign(layer.out, 0.0);
  }
  return p;
}

ParameterSet ParameterSet::glorot(const MlpArchitecture& arch,
                                  std::uint64_t seed) {
  ParameterSet p = zeros(arch);
  RngStream rng(seed);
  for (auto& layer : p.layers) {
    const double limit = std::sqrt(6.0 / (layer.in + layer.out));
    for (auto& w : layer.weights) w = rng.uniform(-limit, limit);
  }
  return p;
}

bool ParameterSet::same_shape(const ParameterSet& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].in != other.layers[l].in) return false;
    if (layers[l].out != other.layers[l].out) return false;
  }
  return true;
}

bool ParameterSet::all_finite() const {
  for (const auto& layer : layers) {
    for (double w : layer.weights) {
      if (!std::isfinite(w)) return false;
    }
    for (double b : layer.bias) {
      if (!std::isfinite(b)) return false;
    }
  }
  return true;
}

std::size_t ParameterSet::num_values() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weights.size() + layer.bias.size();
  return n;
}

namespace {

void check_params_match(const ParameterSet& params, const MlpArchitecture& arch) {
  if (params.layers.size() != arch.num_layers()) {
    throw ShapeError("parameters do not match architecture depth");
  }
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    if (layer.in != arch.layer_sizes[l] || layer.out != arch.layer_sizes[l + 1] ||
        layer.weights.size() != static_cast<std::size_t>(layer.in) * layer.out ||
        layer.bias.size() != layer.out) {
      throw ShapeError("layer " + std::to_string(l) + " shape mismatch");
    }
  }
}

double activate(double z, Activation act) {
  return act == Activation::ReLU ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

double activate_grad(double z, double a, Activation act) {
  return act == Activation::ReLU ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - a * a;
}

// z_l and a_l per layer for one input; used by backprop.
struct ForwardTrace {
  std::vector<std::vector<double>> pre;   // pre-activations, one per layer
  std::vector<std::vector<double>> post;  // activations; post[0] is the input
};

void forward_trace(const ParameterSet& params, const MlpArchitecture& arch,
                   std::span<const double> x, ForwardTrace& trace) {
  const std::size_t L = params.layers.size();
  trace.pre.resize(L);
  trace.post.resize(L + 1);
  trace.post[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = params.layers[l];
    const auto& in = trace.post[l];
    auto& z = trace.pre[l];
    z.assign(layer.out, 0.0);
    for (std::uint32_t r = 0; r < layer.out; ++r) {
      const double* wrow = layer.weights.data() + static_cast<std::size_t>(r) * layer.in;
      double acc = layer.bias[r];
      for (std::uint32_t c = 0; c < layer.in; ++c) acc += wrow[c] * in[c];
      z[r] = acc;
    }
    auto& a = trace.post[l + 1];
    if (l + 1 == L) {
      a = z;  // output layer stays linear (logits)
    } else {
      a.resize(layer.out);
      for (std::uint32_t r = 0; r < layer.out; ++r) {
        a[r] = activate(z[r], arch.hidden_activation);
      }
    }
  }
}

}  // namespace

std::vector<double> forward(const ParameterSet& params,
                            const MlpArchitecture& arch,
                            std::span<const double> x) {
  check_params_match(params, arch);
  if (x.size() != arch.input_dim()) {
    throw ShapeError("input size " + std::to_string(x.size()) +
                     " does not match input dim " +
                     std::to_string(arch.input_dim()));
  }
  ForwardTrace trace;
  forward_trace(params, arch, x, trace);
  return trace.post.back();
}

std::vector<double> softmax(std::span<const double> logits, double tau) {
  if (!(tau > 0.0)) throw DomainError("softmax: tau must be > 0");
  if (logits.empty()) throw ShapeError("softmax: empty logits");
  double zmax = -std::numeric_limits<double>::infinity();
  for (double z : logits) zmax = std::max(zmax, z);
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - zmax) / tau);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

double cross_entropy(std::span<const double> q, std::span<const double> p) {
  if (q.size() != p.size()) throw ShapeError("cross_entropy: length mismatch");
  double h = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q[i] == 0.0) continue;
    h -= q[i] * std::log(std::max(p[i], kProbFloor));
  }
  return h;
}

double kl_divergence(std::span<const double> teacher,
                     std::span<const double> student) {
  if (teacher.size() != student.size()) {
    throw ShapeError("kl_divergence: length mismatch");
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    const double t = teacher[i];
    if (t <= 0.0) continue;
    kl += t * (std::log(t) - std::log(std::max(student[i], kProbFloor)));
  }
  return kl;
}

bool is_prob_vector(std::span<const double> p, double tol) {
  double sum = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

namespace {

void accumulate_example_gradient(const ParameterSet& params,
                                 const MlpArchitecture& arch,
                                 std::span<const double> x,
                                 const std::vector<double>& target,
                                 LossKind kind, double tau, GradientSet& grads,
                                 double& loss_sum, ForwardTrace& trace) {
  const std::size_t L = params.layers.size();
  forward_trace(params, arch, x, trace);
  const auto& logits = trace.post[L];
  const std::vector<double> probs = softmax(logits, tau);
  if (target.size() != probs.size()) {
    throw ShapeError("backprop: target length mismatch");
  }

  if (kind == LossKind::CrossEntropyHard) {
    loss_sum += cross_entropy(target, probs);
  } else {
    loss_sum += kl_divergence(target, probs);
  }

  // delta at the logits; identical form for both losses.
  std::vector<double> delta(probs.size());
  for (std::size_t c = 0; c < probs.size(); ++c) {
    delta[c] = (probs[c] - target[c]) / tau;
  }

  for (std::size_t li = L; li-- > 0;) {
    const auto& layer = params.layers[li];
    auto& glayer = grads.layers[li];
    const auto& in = trace.post[li];
    for (std::uint32_t r = 0; r < layer.out; ++r) {
      const double d = delta[r];
      glayer.bias[r] += d;
      double* grow = glayer.weights.data() + static_cast<std::size_t>(r) * layer.in;
      for (std::uint32_t c = 0; c < layer.in; ++c) grow[c] += d * in[c];
    }
    if (li == 0) break;
    std::vector<double> prev(layer.in, 0.0);
    for (std::uint32_t c = 0; c < layer.in; ++c) {
      double acc = 0.0;
      for (std::uint32_t r = 0; r < layer.out; ++r) {
        acc += layer.weights[static_cast<std::size_t>(r) * layer.in + c] * delta[r];
      }
      prev[c] = acc * activate_grad(trace.pre[li - 1][c], trace.post[li][c],
                                    arch.hidden_activation);
    }
    delta = std::move(prev);
  }
}

void add_scaled(ParameterSet& dst, const ParameterSet& src, double scale) {
  for (std::size_t l = 0; l < dst.layers.size(); ++l) {
    auto& d = dst.layers[l];
    const auto& s = src.layers[l];
    for (std::size_t i = 0; i < d.weights.size(); ++i) d.weights[i] += scale * s.weights[i];
    for (std::size_t i = 0; i < d.bias.size(); ++i) d.bias[i] += scale * s.bias[i];
  }
}

void scale_inplace(ParameterSet& p, double scale) {
  for (auto& layer : p.layers) {
    for (auto& w : layer.weights) w *= scale;
    for (auto& b : layer.bias) b *= scale;
  }
}

}  // namespace

BackpropResult backprop(const ParameterSet& params, const MlpArchitecture& arch,
                        const LabeledBatch& batch, LossKind kind, double tau) {
  check_params_match(params, arch);
  if (batch.size() == 0) throw DomainError("backprop: empty batch");
  if (batch.targets.size() != batch.inputs.size()) {
    throw ShapeError("backprop: inputs/targets size mismatch");
  }
  if (!(tau > 0.0)) throw DomainError("backprop: tau must be > 0");

  // Per-example gradients are accumulated per fixed-size chunk and the chunks
  // reduced in index order, so the result is identical for any thread count.
  const std::size_t n = batch.size();
  const std::size_t chunk = static_cast<std::size_t>(exec::kChunkSize);
  const std::size_t num_chunks = (n + chunk - 1) / chunk;

  std::vector<GradientSet> partial(num_chunks);
  std::vector<double> partial_loss(num_chunks, 0.0);

  const auto run_chunk = [&](std::size_t ci) {
    GradientSet acc = ParameterSet::zeros(arch);
    double loss = 0.0;
    ForwardTrace trace;
    const std::size_t lo = ci * chunk;
    const std::size_t hi = std::min(lo + chunk, n);
    for (std::size_t i = lo; i < hi; ++i) {
      accumulate_example_gradient(params, arch, batch.inputs[i],
                                  batch.targets[i], kind, tau, acc, loss, trace);
    }
    partial[ci] = std::move(acc);
    partial_loss[ci] = loss;
  };

  if (exec::parallel_enabled() && num_chunks > 1) {
#pragma omp parallel for schedule(static)
    for (long long ci = 0; ci < static_cast<long long>(num_chunks); ++ci) {
      run_chunk(static_cast<std::size_t>(ci));
    }
  } else {
    for (std::size_t ci = 0; ci < num_chunks; ++ci) run_chunk(ci);
  }

  BackpropResult result;
  result.grads = std::move(partial[0]);
  double loss_sum = partial_loss[0];
  for (std::size_t ci = 1; ci < num_chunks; ++ci) {
    add_scaled(result.grads, partial[ci], 1.0);
    loss_sum += partial_loss[ci];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  scale_inplace(result.grads, inv_n);
  result.mean_loss = loss_sum * inv_n;
  return result;
}

OptimizerState OptimizerState::sgd(double lr) {
  OptimizerState s;
  s.kind = OptimizerKind::Sgd;
  s.lr = lr;
  return s;
}

OptimizerState OptimizerState::adam(double lr, double beta1, double beta2,
                                    double eps) {
  OptimizerState s;
  s.kind = OptimizerKind::Adam;
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  return s;
}

void optimizer_step(OptimizerState& state, ParameterSet& params,
                    const GradientSet& grads) {
  if (!params.same_shape(grads)) throw ShapeError("optimizer_step: shape mismatch");
  if (state.kind == OptimizerKind::Sgd) {
    add_scaled(params, grads, -state.lr);
    ++state.step;
    return;
  }
  if (state.m.layers.empty()) {
    state.m = params;
    scale_inplace(state.m, 0.0);
    state.v = state.m;
  } else if (!state.m.same_shape(params)) {
    throw ShapeError("optimizer_step: moment shape mismatch");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& pl = params.layers[l];
    const auto& gl = grads.layers[l];
    auto& ml = state.m.layers[l];
    auto& vl = state.v.layers[l];
    const auto update = [&](double& p, double& m, double& v, double g) {
      m = state.beta1 * m + (1.0 - state.beta1) * g;
      v = state.beta2 * v + (1.0 - state.beta2) * g * g;
      const double mhat = m / bc1;
      const double vhat = v / bc2;
      p -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    };
    for (std::size_t i = 0; i < pl.weights.size(); ++i) {
      update(pl.weights[i], ml.weights[i], vl.weights[i], gl.weights[i]);
    }
    for (std::size_t i = 0; i < pl.bias.size(); ++i) {
      update(pl.bias[i], ml.bias[i], vl.bias[i], gl.bias[i]);
    }
  }
}

// --- serialization -----------------------------------------------------------

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (pos + 4 > bytes.size()) throw ParseError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

double get_f64(std::span<const std::uint8_t> bytes, std::size_t& pos) {
  if (pos + 8 > bytes.size()) throw ParseError("checkpoint truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
  pos += 8;
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace

std::vector<std::uint8_t> serialize_parameters(const ParameterSet& params) {
  if (params.layers.empty()) {
    throw DomainError("serialize_parameters: empty parameter set");
  }
  std::vector<std::uint8_t> out;
  out.reserve(serialized_size(params));
  put_u32(out, static_cast<std::uint32_t>(params.layers.size() + 1));
  put_u32(out, params.layers.front().in);
  for (const auto& layer : params.layers) put_u32(out, layer.out);
  for (const auto& layer : params.layers) {
    for (double w : layer.weights) put_f64(out, w);
    for (double b : layer.bias) put_f64(out, b);
  }
  return out;
}

DeserializedParameters deserialize_parameters(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  const std::uint32_t n = get_u32(bytes, pos);
  if (n < 2) throw ParseError("checkpoint: fewer than two layer sizes");
  DeserializedParameters out;
  out.layer_sizes.resize(n);
  for (auto& s : out.layer_sizes) {
    s = get_u32(bytes, pos);
    if (s < 1) throw ParseError("checkpoint: zero layer size");
  }
  out.params.layers.resize(n - 1);
  for (std::uint32_t l = 0; l + 1 < n; ++l) {
    auto& layer = out.params.layers[l];
    layer.in = out.layer_sizes[l];
    layer.out = out.layer_sizes[l + 1];
    layer.weights.resize(static_cast<std::size_t>(layer.in) * layer.out);
    layer.bias.resize(layer.out);
    for (auto& w : layer.weights) w = get_f64(bytes, pos);
    for (auto& b : layer.bias) b = get_f64(bytes, pos);
  }
  if (pos != bytes.size()) throw ParseError("checkpoint: trailing bytes");
  return out;
}

std::size_t serialized_size(const ParameterSet& params) {
  return 4 + 4 * (params.layers.size() + 1) + 8 * params.num_values();
}

void save_parameters(const std::string& path, const ParameterSet& params) {
  const auto bytes = serialize_parameters(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError("cannot open checkpoint for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ParseError("failed writing checkpoint: " + path);
}

DeserializedParameters load_parameters(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return deserialize_parameters(bytes);
}

}  // namespace fedquit
