#pragma once

// Dense kernels for the reference models: affine/ReLU stacks, cross layers,
// pairwise dot interaction and binary cross-entropy. Backward passes are
// written by hand; every one is checked against central differences in the
// test suite.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace compemb::nn {

enum class Activation { identity, relu };

/// Shape of a multilayer perceptron d_0 -> d_1 -> ... -> d_L. Parameters live
/// in one flat buffer: for each layer, a d_{l+1} x d_l row-major weight matrix
/// followed by its bias. Hidden layers use ReLU.
class MlpLayout {
 public:
  MlpLayout() = default;
  explicit MlpLayout(std::vector<std::size_t> dims, Activation output = Activation::identity)
      : dims_(std::move(dims)), output_(output) {
    if (dims_.size() < 2) throw std::invalid_argument("an MLP needs at least input and output dims");
    for (auto d : dims_) {
      if (d == 0) throw std::invalid_argument("MLP layer dims must be >= 1");
    }
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      weight_offsets_.push_back(offset);
      offset += dims_[l + 1] * dims_[l];
      bias_offsets_.push_back(offset);
      offset += dims_[l + 1];
    }
    param_count_ = offset;
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t layers() const { return dims_.size() - 1; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  std::size_t param_count() const { return param_count_; }
  std::size_t weight_offset(std::size_t l) const { return weight_offsets_[l]; }
  std::size_t bias_offset(std::size_t l) const { return bias_offsets_[l]; }
  Activation output_activation() const { return output_; }
  Activation activation(std::size_t l) const { return l + 1 == layers() ? output_ : Activation::relu; }

  bool operator==(const MlpLayout& other) const { return dims_ == other.dims_ && output_ == other.output_; }

 private:
  std::vector<std::size_t> dims_;
  Activation output_ = Activation::identity;
  std::vector<std::size_t> weight_offsets_;
  std::vector<std::size_t> bias_offsets_;
  std::size_t param_count_ = 0;
};

/// Layer outputs (post-activation) from a forward pass; entry 0 is the input.
template <typename T>
struct MlpCache {
  std::vector<std::vector<T>> outputs;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
template <typename T>
void mlp_init(const MlpLayout& layout, std::span<T> params, std::mt19937_64& rng) {
  for (std::size_t l = 0; l < layout.layers(); ++l) {
    const std::size_t in = layout.dims()[l];
    const std::size_t out = layout.dims()[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t k = 0; k < out * in; ++k) params[layout.weight_offset(l) + k] = static_cast<T>(dist(rng));
    for (std::size_t k = 0; k < out; ++k) params[layout.bias_offset(l) + k] = static_cast<T>(dist(rng));
  }
}

template <typename T>
void mlp_forward(const MlpLayout& layout, std::span<const T> params, std::span<const T> x, MlpCache<T>& cache,
                 std::span<T> out) {
  if (x.size() != layout.input_dim()) {
    throw std::invalid_argument("mlp_forward: input dim " + std::to_string(x.size()) + " != " +
                                std::to_string(layout.input_dim()));
  }
  if (out.size() != layout.output_dim()) throw std::invalid_argument("mlp_forward: output dim mismatch");
  if (params.size() != layout.param_count()) throw std::invalid_argument("mlp_forward: parameter count mismatch");

  cache.outputs.resize(layout.layers() + 1);
  cache.outputs[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layout.layers(); ++l) {
    const std::size_t in = layout.dims()[l];
    const std::size_t n_out = layout.dims()[l + 1];
    const T* w = params.data() + layout.weight_offset(l);
    const T* b = params.data() + layout.bias_offset(l);
    const auto& h = cache.outputs[l];
    auto& y = cache.outputs[l + 1];
    y.resize(n_out);
    const bool relu = layout.activation(l) == Activation::relu;
    for (std::size_t o = 0; o < n_out; ++o) {
      T acc = b[o];
      const T* row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * h[i];
      y[o] = relu && acc < T(0) ? T(0) : acc;
    }
  }
  std::copy(cache.outputs.back().begin(), cache.outputs.back().end(), out.begin());
}

/// Accumulates parameter gradients into `param_grad` and writes the input
/// gradient into `input_grad` (skipped when empty).
template <typename T>
void mlp_backward(const MlpLayout& layout, std::span<const T> params, const MlpCache<T>& cache,
                  std::span<const T> upstream, std::span<T> param_grad, std::span<T> input_grad) {
  if (upstream.size() != layout.output_dim()) throw std::invalid_argument("mlp_backward: upstream dim mismatch");
  if (param_grad.size() != layout.param_count()) throw std::invalid_argument("mlp_backward: gradient size mismatch");
  if (!input_grad.empty() && input_grad.size() != layout.input_dim()) {
    throw std::invalid_argument("mlp_backward: input gradient dim mismatch");
  }

  std::vector<T> g(upstream.begin(), upstream.end());
  std::vector<T> g_prev;
  for (std::size_t l = layout.layers(); l-- > 0;) {
    const std::size_t in = layout.dims()[l];
    const std::size_t n_out = layout.dims()[l + 1];
    const auto& h = cache.outputs[l];
    const auto& y = cache.outputs[l + 1];
    if (layout.activation(l) == Activation::relu) {
      for (std::size_t o = 0; o < n_out; ++o) {
        if (!(y[o] > T(0))) g[o] = T(0);
      }
    }
    const T* w = params.data() + layout.weight_offset(l);
    T* gw = param_grad.data() + layout.weight_offset(l);
    T* gb = param_grad.data() + layout.bias_offset(l);
    const bool need_input = l > 0 || !input_grad.empty();
    g_prev.assign(need_input ? in : 0, T(0));
    for (std::size_t o = 0; o < n_out; ++o) {
      const T go = g[o];
      gb[o] += go;
      if (go == T(0)) continue;
      T* gw_row = gw + o * in;
      const T* w_row = w + o * in;
      for (std::size_t i = 0; i < in; ++i) gw_row[i] += go * h[i];
      if (need_input) {
        for (std::size_t i = 0; i < in; ++i) g_prev[i] += w_row[i] * go;
      }
    }
    g.swap(g_prev);
  }
  if (!input_grad.empty()) std::copy(g.begin(), g.end(), input_grad.begin());
}

/// Owning wrapper used by the dense parts of the models.
template <typename T>
class DenseLayerStack {
 public:
  DenseLayerStack() = default;
  explicit DenseLayerStack(MlpLayout layout) : layout_(std::move(layout)), params_(layout_.param_count(), T(0)) {}

  const MlpLayout& layout() const { return layout_; }
  std::span<T> params() { return params_; }
  std::span<const T> params() const { return params_; }

  void init(std::mt19937_64& rng) { mlp_init<T>(layout_, params_, rng); }

  void forward(std::span<const T> x, MlpCache<T>& cache, std::span<T> out) const {
    mlp_forward<T>(layout_, params_, x, cache, out);
  }
  void backward(const MlpCache<T>& cache, std::span<const T> upstream, std::span<T> param_grad,
                std::span<T> input_grad) const {
    mlp_backward<T>(layout_, params_, cache, upstream, param_grad, input_grad);
  }

 private:
  MlpLayout layout_;
  std::vector<T> params_;
};

// ---------------------------------------------------------------------------
// Cross layers: x_{l+1} = x_0 * (x_l . w_l) + b_l + x_l
// ---------------------------------------------------------------------------

template <typename T>
void cross_layer_forward(std::span<const T> x0, std::span<const T> xl, std::span<const T> w, std::span<const T> b,
                         std::span<T> out) {
  const std::size_t n = x0.size();
  if (xl.size() != n || w.size() != n || b.size() != n || out.size() != n) {
    throw std::invalid_argument("cross layer: all vectors must share one dim");
  }
  T s = T(0);
  for (std::size_t i = 0; i < n; ++i) s += xl[i] * w[i];
  for (std::size_t i = 0; i < n; ++i) out[i] = x0[i] * s + b[i] + xl[i];
}

/// Accumulates into grad_x0, grad_w, grad_b; overwrites grad_xl.
template <typename T>
void cross_layer_backward(std::span<const T> x0, std::span<const T> xl, std::span<const T> w,
                          std::span<const T> upstream, std::span<T> grad_x0, std::span<T> grad_xl,
                          std::span<T> grad_w, std::span<T> grad_b) {
  const std::size_t n = x0.size();
  if (xl.size() != n || w.size() != n || upstream.size() != n || grad_x0.size() != n || grad_xl.size() != n ||
      grad_w.size() != n || grad_b.size() != n) {
    throw std::invalid_argument("cross layer: all vectors must share one dim");
  }
  T s = T(0);
  T ds = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    s += xl[i] * w[i];
    ds += upstream[i] * x0[i];
  }
  for (std::size_t i = 0; i < n; ++i) {
    grad_x0[i] += upstream[i] * s;
    grad_b[i] += upstream[i];
    grad_w[i] += ds * xl[i];
    grad_xl[i] = ds * w[i] + upstream[i];
  }
}

/// Stack of cross layers over one input. Layer l owns w_l then b_l in the
/// flat parameter buffer.
template <typename T>
class CrossStack {
 public:
  CrossStack() = default;
  CrossStack(std::size_t dim, std::size_t depth) : dim_(dim), depth_(depth), params_(2 * dim * depth, T(0)) {}

  std::size_t dim() const { return dim_; }
  std::size_t depth() const { return depth_; }
  std::size_t param_count() const { return params_.size(); }
  std::span<T> params() { return params_; }
  std::span<const T> params() const { return params_; }

  void init(std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(dim_, 1)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (std::size_t l = 0; l < depth_; ++l) {
      for (std::size_t i = 0; i < dim_; ++i) params_[2 * l * dim_ + i] = static_cast<T>(dist(rng));
      for (std::size_t i = 0; i < dim_; ++i) params_[(2 * l + 1) * dim_ + i] = T(0);
    }
  }

  /// `states` receives x_0 ... x_depth.
  void forward(std::span<const T> x0, std::vector<std::vector<T>>& states, std::span<T> out) const {
    states.resize(depth_ + 1);
    states[0].assign(x0.begin(), x0.end());
    for (std::size_t l = 0; l < depth_; ++l) {
      states[l + 1].resize(dim_);
      cross_layer_forward<T>(x0, states[l], weight(l), bias(l), states[l + 1]);
    }
    std::copy(states.back().begin(), states.back().end(), out.begin());
  }

  /// Accumulates parameter gradients; overwrites grad_x0.
  void backward(const std::vector<std::vector<T>>& states, std::span<const T> upstream, std::span<T> param_grad,
                std::span<T> grad_x0) const {
    std::fill(grad_x0.begin(), grad_x0.end(), T(0));
    std::vector<T> g(upstream.begin(), upstream.end());
    std::vector<T> g_prev(dim_);
    for (std::size_t l = depth_; l-- > 0;) {
      cross_layer_backward<T>(states[0], states[l], weight(l), g, grad_x0, g_prev,
                              param_grad.subspan(2 * l * dim_, dim_), param_grad.subspan((2 * l + 1) * dim_, dim_));
      g.swap(g_prev);
    }
    // states[0] is also the first layer's x_l.
    for (std::size_t i = 0; i < dim_; ++i) grad_x0[i] += g[i];
  }

 private:
  std::span<const T> weight(std::size_t l) const { return {params_.data() + 2 * l * dim_, dim_}; }
  std::span<const T> bias(std::size_t l) const { return {params_.data() + (2 * l + 1) * dim_, dim_}; }

  std::size_t dim_ = 0;
  std::size_t depth_ = 0;
  std::vector<T> params_;
};

// ---------------------------------------------------------------------------
// Pairwise dot interaction
// ---------------------------------------------------------------------------

inline std::size_t interaction_count(std::size_t n) { return n * (n - 1) / 2; }

/// `vectors` holds n rows of width `dim`. Emits <v_a, v_b> for a < b in
/// row-major upper-triangle order: (0,1), (0,2), ..., (1,2), ...
template <typename T>
void dot_interaction_forward(std::span<const T> vectors, std::size_t dim, std::span<T> out) {
  if (dim == 0 || vectors.size() % dim != 0) throw std::invalid_argument("dot interaction: ragged vectors");
  const std::size_t n = vectors.size() / dim;
  if (out.size() != interaction_count(n)) throw std::invalid_argument("dot interaction: output size mismatch");
  std::size_t k = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      T acc = T(0);
      for (std::size_t d = 0; d < dim; ++d) acc += vectors[a * dim + d] * vectors[b * dim + d];
      out[k++] = acc;
    }
  }
}

/// Accumulates into `grad_vectors`.
template <typename T>
void dot_interaction_backward(std::span<const T> vectors, std::size_t dim, std::span<const T> upstream,
                              std::span<T> grad_vectors) {
  const std::size_t n = vectors.size() / dim;
  if (upstream.size() != interaction_count(n) || grad_vectors.size() != vectors.size()) {
    throw std::invalid_argument("dot interaction: gradient size mismatch");
  }
  std::size_t k = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const T g = upstream[k++];
      for (std::size_t d = 0; d < dim; ++d) {
        grad_vectors[a * dim + d] += g * vectors[b * dim + d];
        grad_vectors[b * dim + d] += g * vectors[a * dim + d];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Binary cross-entropy
// ---------------------------------------------------------------------------

inline constexpr double kProbabilityClamp = 1e-7;

struct LossGrad {
  double loss;
  double grad;
};

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Loss and d(loss)/dp with p clamped to [eps, 1 - eps]; the gradient is zero
/// where the clamp is active.
inline LossGrad bce(double p, double y) {
  const double lo = kProbabilityClamp;
  const double hi = 1.0 - kProbabilityClamp;
  const bool clamped = !(p > lo && p < hi);
  const double pc = std::clamp(p, lo, hi);
  const double loss = -(y * std::log(pc) + (1.0 - y) * std::log(1.0 - pc));
  const double grad = clamped ? 0.0 : -y / pc + (1.0 - y) / (1.0 - pc);
  return {loss, grad};
}

/// Loss of sigmoid(z) and d(loss)/dz = sigmoid(z) - y.
inline LossGrad bce_with_logit(double z, double y) {
  const double p = sigmoid(z);
  return {bce(p, y).loss, p - y};
}

}  // namespace compemb::nn
