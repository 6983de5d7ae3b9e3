#include <cmath>
#include <utility>

#include "tstr/digest.hpp"
#include "tstr/error.hpp"
#include "tstr/transform_model.hpp"

namespace tstr {

TransformParams TransformParams::zeros(std::size_t d, std::size_t h, std::size_t d_out) {
  return TransformParams{DenseLayer(d, h), DenseLayer(h, d_out)};
}

TransformParams TransformParams::initialize(std::size_t d, std::size_t h, std::size_t d_out, std::uint64_t seed) {
  TransformParams p = zeros(d, h, d_out);
  Rng rng(seed);
  for (DenseLayer* layer : {&p.hidden, &p.output}) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer->in + layer->out));
    for (double& w : layer->weights) w = rng.uniform(-limit, limit);
  }
  return p;
}

void TransformParams::validate() const {
  auto check = [](const DenseLayer& l, const char* name) {
    if (l.in == 0 || l.out == 0) throw ShapeError(std::string(name) + " layer has a zero dimension");
    if (l.weights.size() != l.in * l.out || l.bias.size() != l.out) {
      throw ShapeError(std::string(name) + " layer storage does not match its shape");
    }
    for (double w : l.weights) {
      if (!std::isfinite(w)) throw ShapeError(std::string(name) + " layer has non-finite weights");
    }
    for (double b : l.bias) {
      if (!std::isfinite(b)) throw ShapeError(std::string(name) + " layer has non-finite bias");
    }
  };
  check(hidden, "hidden");
  check(output, "output");
  if (output.in != hidden.out) throw ShapeError("output layer input does not match hidden width");
}

std::string TransformParams::digest() const {
  Sha256 h;
  h.update("tanh-mlp/v1");
  for (const DenseLayer* l : {&hidden, &output}) {
    h.field(std::to_string(l->in) + "x" + std::to_string(l->out));
    h.field({reinterpret_cast<const char*>(l->weights.data()), l->weights.size() * sizeof(double)});
    h.field({reinterpret_cast<const char*>(l->bias.data()), l->bias.size() * sizeof(double)});
  }
  return h.hex();
}

DropoutMask DropoutMask::sample(std::size_t dim, double rate, Rng& rng) {
  DropoutMask m;
  m.rate = rate;
  m.keep.resize(dim);
  for (auto& k : m.keep) k = rng.bernoulli(rate) ? 0 : 1;
  return m;
}

namespace {

struct BranchTrace {
  std::vector<double> input;   // after dropout
  std::vector<double> hidden;  // tanh activations
  std::vector<double> output;
};

void check_input(const TransformParams& params, std::span<const double> v, const DropoutMask* mask) {
  if (v.size() != params.input_dim()) {
    throw ShapeError("transform input has dim " + std::to_string(v.size()) + ", expected " +
                     std::to_string(params.input_dim()));
  }
  if (mask != nullptr && mask->keep.size() != v.size()) throw ShapeError("dropout mask size mismatch");
}

std::vector<double> masked_input(const TransformParams& params, std::span<const double> v, const DropoutMask* mask) {
  check_input(params, v, mask);
  std::vector<double> input(v.begin(), v.end());
  if (mask != nullptr) {
    const double scale = 1.0 / (1.0 - mask->rate);
    for (std::size_t i = 0; i < input.size(); ++i) input[i] = mask->keep[i] ? input[i] * scale : 0.0;
  }
  return input;
}

BranchTrace run_branch(const TransformParams& params, std::span<const double> v, const DropoutMask* mask) {
  BranchTrace t;
  t.input = masked_input(params, v, mask);
  t.hidden.resize(params.hidden_dim());
  kernels::matvec(params.hidden.view(), t.input, params.hidden.bias, t.hidden);
  for (double& a : t.hidden) a = std::tanh(a);
  t.output.resize(params.output_dim());
  kernels::matvec(params.output.view(), t.hidden, params.output.bias, t.output);
  return t;
}

// Both branches share the weights, so they run side by side and each
// weight row is streamed once per pair. Gradients accumulate as if the
// first branch were back-propagated completely before the second.
std::pair<BranchTrace, BranchTrace> run_pair(const TransformParams& params, std::span<const double> v1,
                                             std::span<const double> v2, const DropoutMask* mask1,
                                             const DropoutMask* mask2) {
  BranchTrace a, b;
  a.input = masked_input(params, v1, mask1);
  b.input = masked_input(params, v2, mask2);
  a.hidden.resize(params.hidden_dim());
  b.hidden.resize(params.hidden_dim());
  kernels::matvec_pair(params.hidden.view(), a.input, b.input, params.hidden.bias, a.hidden, b.hidden);
  for (double& x : a.hidden) x = std::tanh(x);
  for (double& x : b.hidden) x = std::tanh(x);
  a.output.resize(params.output_dim());
  b.output.resize(params.output_dim());
  kernels::matvec_pair(params.output.view(), a.hidden, b.hidden, params.output.bias, a.output, b.output);
  return {std::move(a), std::move(b)};
}

void backprop_pair(const TransformParams& params, const BranchTrace& t1, const BranchTrace& t2,
                   std::span<const double> g1, std::span<const double> g2, ParamGradient& grad) {
  kernels::add_outer_pair(g1, t1.hidden, g2, t2.hidden, grad.output.weights);
  kernels::axpy(1.0, g1, grad.output.bias);
  kernels::axpy(1.0, g2, grad.output.bias);
  std::vector<double> h1(params.hidden_dim()), h2(params.hidden_dim());
  kernels::matvec_transposed_pair(params.output.view(), g1, g2, h1, h2);
  for (std::size_t i = 0; i < h1.size(); ++i) {
    h1[i] *= 1.0 - t1.hidden[i] * t1.hidden[i];
    h2[i] *= 1.0 - t2.hidden[i] * t2.hidden[i];
  }
  kernels::add_outer_pair(h1, t1.input, h2, t2.input, grad.hidden.weights);
  kernels::axpy(1.0, h1, grad.hidden.bias);
  kernels::axpy(1.0, h2, grad.hidden.bias);
}

double loss_value(double cos, double target, LossKind kind) {
  const double diff = cos - target;
  return kind == LossKind::squared ? diff * diff : std::abs(diff);
}

double loss_slope(double cos, double target, LossKind kind) {
  const double diff = cos - target;
  if (kind == LossKind::squared) return 2.0 * diff;
  return diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
}

}  // namespace

std::vector<double> forward(const TransformParams& params, std::span<const double> v, const DropoutMask* mask) {
  return run_branch(params, v, mask).output;
}

std::vector<double> transform_normalized(const TransformParams& params, std::span<const double> v) {
  std::vector<double> y = forward(params, v);
  const double norm = std::sqrt(kernels::dot(y, y));
  if (!(norm >= kDegenerateNorm)) return {};
  for (double& x : y) x /= norm;
  return y;
}

PairLoss pair_loss(const TransformParams& params, std::span<const double> v1, std::span<const double> v2,
                   double target, LossKind kind) {
  const auto y1 = forward(params, v1);
  const auto y2 = forward(params, v2);
  const double n1 = std::sqrt(kernels::dot(y1, y1));
  const double n2 = std::sqrt(kernels::dot(y2, y2));
  PairLoss r;
  if (n1 < kDegenerateNorm || n2 < kDegenerateNorm) {
    r.degenerate = true;
  } else {
    r.cosine = std::clamp(kernels::dot(y1, y2) / (n1 * n2), -1.0, 1.0);
  }
  r.loss = loss_value(r.cosine, target, kind);
  return r;
}

PairLoss accumulate_gradient(const TransformParams& params, std::span<const double> v1, std::span<const double> v2,
                             double target, const DropoutMask* mask1, const DropoutMask* mask2, LossKind kind,
                             ParamGradient& grad) {
  const auto [t1, t2] = run_pair(params, v1, v2, mask1, mask2);
  const double n1 = std::sqrt(kernels::dot(t1.output, t1.output));
  const double n2 = std::sqrt(kernels::dot(t2.output, t2.output));
  PairLoss r;
  if (n1 < kDegenerateNorm || n2 < kDegenerateNorm) {
    // Cosine is pinned to 0 here, so it contributes no gradient.
    r.degenerate = true;
    r.loss = loss_value(0.0, target, kind);
    return r;
  }
  const double c = std::clamp(kernels::dot(t1.output, t2.output) / (n1 * n2), -1.0, 1.0);
  r.cosine = c;
  r.loss = loss_value(c, target, kind);
  const double slope = loss_slope(c, target, kind);
  if (slope == 0.0) return r;

  // d cos / d y1 = y2 / (n1 n2) - cos * y1 / n1^2, symmetrically for y2.
  const std::size_t m = params.output_dim();
  std::vector<double> g1(m), g2(m);
  const double inv12 = 1.0 / (n1 * n2);
  const double c1 = c / (n1 * n1);
  const double c2 = c / (n2 * n2);
  for (std::size_t i = 0; i < m; ++i) {
    g1[i] = slope * (t2.output[i] * inv12 - c1 * t1.output[i]);
    g2[i] = slope * (t1.output[i] * inv12 - c2 * t2.output[i]);
  }
  backprop_pair(params, t1, t2, g1, g2, grad);
  return r;
}

ParamGradient gradient(const TransformParams& params, std::span<const double> v1, std::span<const double> v2,
                       double target, const DropoutMask* mask1, const DropoutMask* mask2, LossKind kind) {
  ParamGradient g = TransformParams::zeros(params.input_dim(), params.hidden_dim(), params.output_dim());
  accumulate_gradient(params, v1, v2, target, mask1, mask2, kind, g);
  return g;
}

}  // namespace tstr
