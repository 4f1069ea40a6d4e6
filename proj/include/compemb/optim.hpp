#pragma once

// First-order optimizers over named parameter blocks. A block is a flat span
// viewed as rows of fixed width; dense blocks are stepped in full, embedding
// tables and transform families are stepped row by row (lazy: rows that a
// batch did not touch keep their parameters and accumulators unchanged).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "compemb/sparse.hpp"

namespace compemb {

enum class OptimizerKind { sgd, adagrad, amsgrad };

std::string_view to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adagrad;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-10;
  /// When false the running max of the second moment is replaced by the
  /// current second moment, i.e. plain Adam. Test hook.
  bool amsgrad_max = true;

  /// Adagrad: lr 0.01, eps 1e-10. AMSGrad: lr 1e-3, betas (0.9, 0.999), eps 1e-8.
  /// SGD: lr 0.01.
  static OptimizerConfig defaults(OptimizerKind kind) {
    OptimizerConfig c;
    c.kind = kind;
    switch (kind) {
      case OptimizerKind::sgd:
        c.learning_rate = 0.01;
        break;
      case OptimizerKind::adagrad:
        c.learning_rate = 0.01;
        c.epsilon = 1e-10;
        break;
      case OptimizerKind::amsgrad:
        c.learning_rate = 1e-3;
        c.epsilon = 1e-8;
        break;
    }
    return c;
  }
};

template <typename T>
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  const OptimizerConfig& config() const { return config_; }

  /// Registers a block; the span must stay valid for the optimizer's lifetime.
  std::size_t add_block(std::string name, std::span<T> values, std::size_t row_width) {
    if (row_width == 0 || values.size() % row_width != 0) {
      throw std::invalid_argument("block '" + name + "': size is not a multiple of the row width");
    }
    Block b;
    b.name = std::move(name);
    b.values = values;
    b.width = row_width;
    const std::size_t n = values.size();
    switch (config_.kind) {
      case OptimizerKind::sgd:
        break;
      case OptimizerKind::adagrad:
        b.sum_sq.assign(n, 0.0);
        break;
      case OptimizerKind::amsgrad:
        b.m.assign(n, 0.0);
        b.v.assign(n, 0.0);
        b.v_max.assign(n, 0.0);
        break;
    }
    blocks_.push_back(std::move(b));
    return blocks_.size() - 1;
  }

  std::size_t block_count() const { return blocks_.size(); }
  const std::string& block_name(std::size_t id) const { return blocks_.at(id).name; }

  /// Advances the step counter used for AMSGrad bias correction. Call once per
  /// batch before stepping the blocks.
  void begin_step() {
    ++step_;
    const double t = static_cast<double>(step_);
    bias_correction1_ = 1.0 - std::pow(config_.beta1, t);
    bias_correction2_ = 1.0 - std::pow(config_.beta2, t);
  }
  std::uint64_t step_count() const { return step_; }

  void step_dense(std::size_t id, std::span<const T> grad) {
    Block& b = blocks_.at(id);
    if (grad.size() != b.values.size()) {
      throw std::invalid_argument("block '" + b.name + "': gradient size mismatch");
    }
    check_finite(b, grad, 0);
    for (std::size_t k = 0; k < grad.size(); ++k) update(b, k, grad[k]);
  }

  void step_rows(std::size_t id, const RowGradients<T>& grads) {
    Block& b = blocks_.at(id);
    if (grads.width() != b.width) throw std::invalid_argument("block '" + b.name + "': row width mismatch");
    const std::size_t rows = b.values.size() / b.width;
    for (std::size_t r = 0; r < grads.size(); ++r) {
      const auto row = grads.row_id(r);
      if (row >= rows) throw std::out_of_range("block '" + b.name + "': gradient row out of range");
      auto g = grads.values(r);
      check_finite(b, g, row);
      const std::size_t base = row * b.width;
      for (std::size_t c = 0; c < b.width; ++c) update(b, base + c, g[c]);
    }
  }

  // State accessors for inspection and tests.
  std::span<const double> sum_of_squares(std::size_t id) const { return blocks_.at(id).sum_sq; }
  std::span<const double> first_moment(std::size_t id) const { return blocks_.at(id).m; }
  std::span<const double> second_moment(std::size_t id) const { return blocks_.at(id).v; }
  std::span<const double> max_second_moment(std::size_t id) const { return blocks_.at(id).v_max; }

 private:
  struct Block {
    std::string name;
    std::span<T> values;
    std::size_t width = 1;
    std::vector<double> sum_sq;
    std::vector<double> m;
    std::vector<double> v;
    std::vector<double> v_max;
  };

  static void check_finite(const Block& b, std::span<const T> grad, std::uint64_t row) {
    for (std::size_t c = 0; c < grad.size(); ++c) {
      if (!std::isfinite(static_cast<double>(grad[c]))) {
        const std::size_t flat = row * b.width + c;
        throw std::runtime_error("nonfinite gradient in " + b.name + "[row " + std::to_string(flat / b.width) +
                                 ", col " + std::to_string(flat % b.width) + "]");
      }
    }
  }

  void update(Block& b, std::size_t k, T grad) {
    const double g = static_cast<double>(grad);
    double w = static_cast<double>(b.values[k]);
    switch (config_.kind) {
      case OptimizerKind::sgd:
        w -= config_.learning_rate * g;
        break;
      case OptimizerKind::adagrad:
        b.sum_sq[k] += g * g;
        w -= config_.learning_rate * g / std::sqrt(b.sum_sq[k] + config_.epsilon);
        break;
      case OptimizerKind::amsgrad: {
        if (step_ == 0) throw std::logic_error("begin_step() must precede an AMSGrad update");
        b.m[k] = config_.beta1 * b.m[k] + (1.0 - config_.beta1) * g;
        b.v[k] = config_.beta2 * b.v[k] + (1.0 - config_.beta2) * g * g;
        b.v_max[k] = config_.amsgrad_max ? std::max(b.v_max[k], b.v[k]) : b.v[k];
        const double denom = std::sqrt(b.v_max[k]) / std::sqrt(bias_correction2_) + config_.epsilon;
        w -= config_.learning_rate / bias_correction1_ * b.m[k] / denom;
        break;
      }
    }
    b.values[k] = static_cast<T>(w);
  }

  OptimizerConfig config_;
  std::vector<Block> blocks_;
  std::uint64_t step_ = 0;
  double bias_correction1_ = 1.0;
  double bias_correction2_ = 1.0;
};

}  // namespace compemb
