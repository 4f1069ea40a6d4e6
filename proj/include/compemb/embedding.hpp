#pragma once

// Embedding tables and the lookup/backward kernels built on them: full
// tables, the hashing trick, the quotient-remainder trick, operation-based
// compositional embeddings (concat / add / mult / feature generation) and
// path-based compositional embeddings.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "compemb/nn.hpp"
#include "compemb/partitions.hpp"
#include "compemb/sparse.hpp"

namespace compemb {

// ---------------------------------------------------------------------------
// Binary helpers: 64-bit little-endian counts and 32-bit float payloads.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(v >> (8 * b));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline std::uint64_t read_u64_le(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw std::runtime_error("truncated table header");
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  return v;
}

inline void write_f32_le(std::ostream& out, float f) {
  std::uint32_t u = std::bit_cast<std::uint32_t>(f);
  unsigned char bytes[4];
  for (int b = 0; b < 4; ++b) bytes[b] = static_cast<unsigned char>(u >> (8 * b));
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

inline float read_f32_le(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw std::runtime_error("truncated table payload");
  std::uint32_t u = 0;
  for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[b]) << (8 * b);
  return std::bit_cast<float>(u);
}

}  // namespace detail

/// Row-major rows x dim matrix of trainable embedding vectors.
template <typename T>
class EmbeddingTable {
 public:
  EmbeddingTable(Index rows, std::size_t dim) : rows_(rows), dim_(dim) {
    if (rows == 0 || dim == 0) throw std::invalid_argument("embedding table needs rows >= 1 and dim >= 1");
    values_.assign(rows * dim, T(0));
  }

  /// Entries i.i.d. uniform on [-1/sqrt(dim), 1/sqrt(dim)].
  static EmbeddingTable uniform(Index rows, std::size_t dim, std::mt19937_64& rng) {
    return uniform(rows, dim, 1.0 / std::sqrt(static_cast<double>(dim)), rng);
  }

  static EmbeddingTable uniform(Index rows, std::size_t dim, double bound, std::mt19937_64& rng) {
    EmbeddingTable t(rows, dim);
    t.fill_uniform(bound, rng);
    return t;
  }

  void fill_uniform(double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : values_) v = static_cast<T>(dist(rng));
  }

  static EmbeddingTable from_values(Index rows, std::size_t dim, std::vector<T> values) {
    EmbeddingTable t(rows, dim);
    if (values.size() != rows * dim) throw std::invalid_argument("embedding table: value count mismatch");
    t.values_ = std::move(values);
    return t;
  }

  Index rows() const { return rows_; }
  std::size_t dim() const { return dim_; }
  std::size_t param_count() const { return values_.size(); }

  std::span<const T> row(Index r) const {
    check_row(r);
    return {values_.data() + r * dim_, dim_};
  }
  std::span<T> row(Index r) {
    check_row(r);
    return {values_.data() + r * dim_, dim_};
  }
  std::span<const T> row_unchecked(Index r) const { return {values_.data() + r * dim_, dim_}; }

  std::span<const T> values() const { return values_; }
  std::span<T> values() { return values_; }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](T v) { return std::isfinite(static_cast<double>(v)); });
  }

  /// Header: rows, dim as 64-bit little-endian; payload: row-major float32.
  void save(std::ostream& out) const {
    detail::write_u64_le(out, rows_);
    detail::write_u64_le(out, dim_);
    for (T v : values_) detail::write_f32_le(out, static_cast<float>(v));
    if (!out) throw std::runtime_error("failed to write embedding table");
  }

  static EmbeddingTable load(std::istream& in) {
    const auto rows = detail::read_u64_le(in);
    const auto dim = detail::read_u64_le(in);
    EmbeddingTable t(rows, dim);
    for (auto& v : t.values_) v = static_cast<T>(detail::read_f32_le(in));
    return t;
  }

  bool operator==(const EmbeddingTable& other) const = default;

 private:
  void check_row(Index r) const {
    if (r >= rows_) {
      throw std::out_of_range("row " + std::to_string(r) + " out of range (rows = " + std::to_string(rows_) + ")");
    }
  }

  Index rows_;
  std::size_t dim_;
  std::vector<T> values_;
};

// ---------------------------------------------------------------------------
// Single-table lookups
// ---------------------------------------------------------------------------

template <typename T>
std::vector<T> full_lookup(const EmbeddingTable<T>& table, Index i) {
  auto r = table.row(i);
  return {r.begin(), r.end()};
}

/// Row i mod m of an m-row table.
template <typename T>
std::vector<T> hash_lookup(const EmbeddingTable<T>& table, Index i, Index m) {
  if (m == 0) throw std::invalid_argument("zero modulus");
  if (table.rows() != m) throw std::invalid_argument("hash table must have exactly m rows");
  return full_lookup(table, i % m);
}

/// remainder_table[i mod m] * quotient_table[i / m], element-wise.
template <typename T>
std::vector<T> qr_lookup(const EmbeddingTable<T>& remainder_table, const EmbeddingTable<T>& quotient_table, Index i,
                         Index m) {
  if (m == 0) throw std::invalid_argument("zero modulus");
  if (remainder_table.rows() != m) throw std::invalid_argument("remainder table must have exactly m rows");
  if (remainder_table.dim() != quotient_table.dim()) throw std::invalid_argument("qr tables differ in dim");
  auto rem = remainder_table.row(i % m);
  auto quo = quotient_table.row(i / m);
  std::vector<T> out(rem.size());
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = rem[d] * quo[d];
  return out;
}

// ---------------------------------------------------------------------------
// Operation-based compositional embeddings
// ---------------------------------------------------------------------------

enum class CompositionOp { concat, add, mult, feature_generation };

inline std::string_view to_string(CompositionOp op) {
  switch (op) {
    case CompositionOp::concat: return "concat";
    case CompositionOp::add: return "add";
    case CompositionOp::mult: return "mult";
    case CompositionOp::feature_generation: return "feature";
  }
  return "?";
}

inline CompositionOp composition_op_from_string(std::string_view name) {
  if (name == "concat") return CompositionOp::concat;
  if (name == "add") return CompositionOp::add;
  if (name == "mult") return CompositionOp::mult;
  if (name == "feature" || name == "feature_generation") return CompositionOp::feature_generation;
  throw std::invalid_argument("unknown composition op '" + std::string(name) + "'");
}

/// One table per partition, combined by `op`. In feature-generation mode the
/// per-partition vectors are emitted side by side as separate features.
template <typename T>
class CompositionScheme {
 public:
  using Gradients = std::vector<RowGradients<T>>;

  CompositionScheme(PartitionSet partitions, std::vector<EmbeddingTable<T>> tables, CompositionOp op)
      : partitions_(std::move(partitions)), tables_(std::move(tables)), op_(op) {
    if (tables_.size() != partitions_.count()) {
      throw std::invalid_argument("composition: " + std::to_string(tables_.size()) + " tables for " +
                                  std::to_string(partitions_.count()) + " partitions");
    }
    for (std::size_t j = 0; j < tables_.size(); ++j) {
      if (tables_[j].rows() != partitions_.size(j)) {
        throw std::invalid_argument("composition: table " + std::to_string(j) + " has " +
                                    std::to_string(tables_[j].rows()) + " rows, partition has " +
                                    std::to_string(partitions_.size(j)) + " classes");
      }
    }
    if (op_ == CompositionOp::add || op_ == CompositionOp::mult) {
      for (const auto& t : tables_) {
        if (t.dim() != tables_[0].dim()) throw std::invalid_argument("composition: add/mult need equal table dims");
      }
      out_dim_ = tables_[0].dim();
    } else {
      out_dim_ = 0;
      for (const auto& t : tables_) out_dim_ += t.dim();
    }
  }

  static CompositionScheme random(PartitionSet partitions, std::vector<std::size_t> dims, CompositionOp op,
                                  std::mt19937_64& rng) {
    if (dims.size() == 1 && partitions.count() > 1) dims.assign(partitions.count(), dims[0]);
    if (dims.size() != partitions.count()) throw std::invalid_argument("composition: one dim per partition");
    std::vector<EmbeddingTable<T>> tables;
    for (std::size_t j = 0; j < dims.size(); ++j) {
      tables.push_back(EmbeddingTable<T>::uniform(partitions.size(j), dims[j], rng));
    }
    return CompositionScheme(std::move(partitions), std::move(tables), op);
  }

  const PartitionSet& partitions() const { return partitions_; }
  const std::vector<EmbeddingTable<T>>& tables() const { return tables_; }
  std::vector<EmbeddingTable<T>>& tables() { return tables_; }
  CompositionOp op() const { return op_; }
  Index domain_size() const { return partitions_.domain_size(); }

  /// Width of lookup(); for feature generation, the k vectors laid end to end.
  std::size_t out_dim() const { return out_dim_; }
  /// Number of feature vectors a lookup yields: k in feature-generation mode, else 1.
  std::size_t vector_count() const { return op_ == CompositionOp::feature_generation ? tables_.size() : 1; }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& t : tables_) n += t.param_count();
    return n;
  }

  void lookup(Index i, std::span<T> out) const {
    check_index(i);
    if (out.size() != out_dim_) throw std::invalid_argument("composition: output buffer has wrong size");
    const std::size_t k = tables_.size();
    switch (op_) {
      case CompositionOp::concat:
      case CompositionOp::feature_generation: {
        std::size_t offset = 0;
        for (std::size_t j = 0; j < k; ++j) {
          auto z = tables_[j].row_unchecked(partitions_.class_index_unchecked(j, i));
          std::copy(z.begin(), z.end(), out.begin() + offset);
          offset += z.size();
        }
        break;
      }
      case CompositionOp::add: {
        auto z0 = tables_[0].row_unchecked(partitions_.class_index_unchecked(0, i));
        std::copy(z0.begin(), z0.end(), out.begin());
        for (std::size_t j = 1; j < k; ++j) {
          auto z = tables_[j].row_unchecked(partitions_.class_index_unchecked(j, i));
          for (std::size_t d = 0; d < out_dim_; ++d) out[d] += z[d];
        }
        break;
      }
      case CompositionOp::mult: {
        // Left-to-right product over j; the tensor oracle uses the same order.
        auto z0 = tables_[0].row_unchecked(partitions_.class_index_unchecked(0, i));
        std::copy(z0.begin(), z0.end(), out.begin());
        for (std::size_t j = 1; j < k; ++j) {
          auto z = tables_[j].row_unchecked(partitions_.class_index_unchecked(j, i));
          for (std::size_t d = 0; d < out_dim_; ++d) out[d] *= z[d];
        }
        break;
      }
    }
  }

  std::vector<T> lookup(Index i) const {
    std::vector<T> out(out_dim_);
    lookup(i, out);
    return out;
  }

  /// Per-partition vectors z_1, ..., z_k (the feature-generation view).
  std::vector<std::vector<T>> lookup_features(Index i) const {
    check_index(i);
    std::vector<std::vector<T>> out;
    for (std::size_t j = 0; j < tables_.size(); ++j) {
      auto z = tables_[j].row_unchecked(partitions_.class_index_unchecked(j, i));
      out.emplace_back(z.begin(), z.end());
    }
    return out;
  }

  Gradients make_gradients() const {
    Gradients g;
    for (const auto& t : tables_) g.emplace_back(t.dim());
    return g;
  }

  /// Accumulates d(loss)/d(rows) for the rows touched by category i.
  void backward(Index i, std::span<const T> upstream, Gradients& grads) const {
    check_index(i);
    if (upstream.size() != out_dim_) throw std::invalid_argument("composition: upstream gradient has wrong size");
    if (grads.size() != tables_.size()) throw std::invalid_argument("composition: gradient set has wrong size");
    const std::size_t k = tables_.size();
    switch (op_) {
      case CompositionOp::concat:
      case CompositionOp::feature_generation: {
        std::size_t offset = 0;
        for (std::size_t j = 0; j < k; ++j) {
          auto g = grads[j].row(partitions_.class_index_unchecked(j, i));
          for (std::size_t d = 0; d < g.size(); ++d) g[d] += upstream[offset + d];
          offset += g.size();
        }
        break;
      }
      case CompositionOp::add:
        for (std::size_t j = 0; j < k; ++j) {
          auto g = grads[j].row(partitions_.class_index_unchecked(j, i));
          for (std::size_t d = 0; d < out_dim_; ++d) g[d] += upstream[d];
        }
        break;
      case CompositionOp::mult: {
        std::vector<std::span<const T>> z(k);
        for (std::size_t j = 0; j < k; ++j) z[j] = tables_[j].row_unchecked(partitions_.class_index_unchecked(j, i));
        for (std::size_t j = 0; j < k; ++j) {
          auto g = grads[j].row(partitions_.class_index_unchecked(j, i));
          for (std::size_t d = 0; d < out_dim_; ++d) {
            T cofactor = upstream[d];
            for (std::size_t l = 0; l < k; ++l) {
              if (l != j) cofactor *= z[l][d];
            }
            g[d] += cofactor;
          }
        }
        break;
      }
    }
  }

 private:
  void check_index(Index i) const {
    if (i >= partitions_.domain_size()) {
      throw std::out_of_range("category index " + std::to_string(i) + " out of range (|S| = " +
                              std::to_string(partitions_.domain_size()) + ")");
    }
  }

  PartitionSet partitions_;
  std::vector<EmbeddingTable<T>> tables_;
  CompositionOp op_;
  std::size_t out_dim_ = 0;
};

/// Dense |P_1| x ... x |P_k| x D tensor of all element-wise-product embeddings,
/// built by iterated outer products of table columns.
template <typename T>
struct MultTensor {
  std::vector<Index> shape;  // |P_1|, ..., |P_k|
  std::size_t dim = 0;
  std::vector<T> values;  // row-major, dim fastest

  T at(std::span<const Index> classes, std::size_t d) const {
    std::size_t flat = 0;
    for (std::size_t j = 0; j < shape.size(); ++j) flat = flat * shape[j] + classes[j];
    return values[flat * dim + d];
  }
};

template <typename T>
MultTensor<T> mult_tensor_oracle(const CompositionScheme<T>& scheme, Index max_cells = 100'000) {
  if (scheme.op() != CompositionOp::mult) throw std::invalid_argument("tensor oracle requires the mult op");
  MultTensor<T> tensor;
  tensor.shape = scheme.partitions().sizes();
  tensor.dim = scheme.out_dim();
  auto cells = checked_product(tensor.shape);
  if (!cells || *cells > max_cells) {
    throw std::invalid_argument("tensor oracle: product of partition sizes exceeds the guard of " +
                                std::to_string(max_cells));
  }
  tensor.values.assign(*cells * tensor.dim, T(0));

  const auto& tables = scheme.tables();
  for (std::size_t d = 0; d < tensor.dim; ++d) {
    // slice <- W_1[:, d]; slice <- slice (x) W_j[:, d] for j = 2..k
    std::vector<T> slice(tables[0].rows());
    for (Index r = 0; r < tables[0].rows(); ++r) slice[r] = tables[0].row_unchecked(r)[d];
    for (std::size_t j = 1; j < tables.size(); ++j) {
      std::vector<T> next(slice.size() * tables[j].rows());
      for (std::size_t a = 0; a < slice.size(); ++a) {
        for (Index b = 0; b < tables[j].rows(); ++b) {
          next[a * tables[j].rows() + b] = slice[a] * tables[j].row_unchecked(b)[d];
        }
      }
      slice = std::move(next);
    }
    for (std::size_t c = 0; c < slice.size(); ++c) tensor.values[c * tensor.dim + d] = slice[c];
  }
  return tensor;
}

// ---------------------------------------------------------------------------
// Path-based compositional embeddings
// ---------------------------------------------------------------------------

/// Base table over partition 0, then for each later partition j a family of
/// |P_j| MLPs; category i runs its base row through the MLPs selected by
/// p_1(i), ..., p_{k-1}(i) in order. A transform with no hidden layer is the
/// affine map Az + b. Each family is stored as a table with one row of
/// flattened MLP parameters per class, so it trains like an embedding table.
template <typename T>
class PathScheme {
 public:
  using Gradients = std::vector<RowGradients<T>>;  // base table, then one per stage

  PathScheme(PartitionSet partitions, EmbeddingTable<T> base, std::vector<nn::MlpLayout> layouts,
             std::vector<EmbeddingTable<T>> stage_params)
      : partitions_(std::move(partitions)),
        base_(std::move(base)),
        layouts_(std::move(layouts)),
        stages_(std::move(stage_params)) {
    const std::size_t k = partitions_.count();
    if (base_.rows() != partitions_.size(0)) throw std::invalid_argument("path: base table rows != |P_1|");
    if (layouts_.size() != k - 1 || stages_.size() != k - 1) {
      throw std::invalid_argument("path: need one transform family per partition after the first");
    }
    std::size_t in = base_.dim();
    for (std::size_t s = 0; s < layouts_.size(); ++s) {
      if (layouts_[s].input_dim() != in) {
        throw std::invalid_argument("path: stage " + std::to_string(s + 1) + " expects input dim " +
                                    std::to_string(layouts_[s].input_dim()) + ", previous stage yields " +
                                    std::to_string(in));
      }
      if (stages_[s].rows() != partitions_.size(s + 1) || stages_[s].dim() != layouts_[s].param_count()) {
        throw std::invalid_argument("path: stage " + std::to_string(s + 1) + " parameter table has wrong shape");
      }
      in = layouts_[s].output_dim();
    }
    out_dim_ = in;
  }

  /// Every stage maps to `out_dim`; `hidden` lists hidden widths (empty for
  /// linear transforms).
  static PathScheme random(PartitionSet partitions, std::size_t out_dim, const std::vector<std::size_t>& hidden,
                           std::mt19937_64& rng) {
    auto base = EmbeddingTable<T>::uniform(partitions.size(0), out_dim, rng);
    std::vector<nn::MlpLayout> layouts;
    std::vector<EmbeddingTable<T>> stages;
    for (std::size_t j = 1; j < partitions.count(); ++j) {
      std::vector<std::size_t> dims{out_dim};
      dims.insert(dims.end(), hidden.begin(), hidden.end());
      dims.push_back(out_dim);
      nn::MlpLayout layout(dims);
      EmbeddingTable<T> family(partitions.size(j), layout.param_count());
      for (Index r = 0; r < family.rows(); ++r) nn::mlp_init<T>(layout, family.row(r), rng);
      layouts.push_back(std::move(layout));
      stages.push_back(std::move(family));
    }
    return PathScheme(std::move(partitions), std::move(base), std::move(layouts), std::move(stages));
  }

  const PartitionSet& partitions() const { return partitions_; }
  const EmbeddingTable<T>& base() const { return base_; }
  EmbeddingTable<T>& base() { return base_; }
  const std::vector<nn::MlpLayout>& layouts() const { return layouts_; }
  const std::vector<EmbeddingTable<T>>& stages() const { return stages_; }
  std::vector<EmbeddingTable<T>>& stages() { return stages_; }
  std::size_t out_dim() const { return out_dim_; }
  Index domain_size() const { return partitions_.domain_size(); }

  std::size_t param_count() const {
    std::size_t n = base_.param_count();
    for (const auto& s : stages_) n += s.param_count();
    return n;
  }

  void lookup(Index i, std::span<T> out) const {
    std::vector<nn::MlpCache<T>> caches;
    forward(i, caches, out);
  }

  std::vector<T> lookup(Index i) const {
    std::vector<T> out(out_dim_);
    lookup(i, out);
    return out;
  }

  Gradients make_gradients() const {
    Gradients g;
    g.emplace_back(base_.dim());
    for (const auto& s : stages_) g.emplace_back(s.dim());
    return g;
  }

  /// Recomputes the forward pass, then backpropagates through the selected
  /// transforms into their parameter rows and the base row.
  void backward(Index i, std::span<const T> upstream, Gradients& grads) const {
    if (upstream.size() != out_dim_) throw std::invalid_argument("path: upstream gradient has wrong size");
    if (grads.size() != stages_.size() + 1) throw std::invalid_argument("path: gradient set has wrong size");
    std::vector<nn::MlpCache<T>> caches;
    std::vector<T> out(out_dim_);
    forward(i, caches, out);

    std::vector<T> g(upstream.begin(), upstream.end());
    for (std::size_t s = stages_.size(); s-- > 0;) {
      const Index cls = partitions_.class_index_unchecked(s + 1, i);
      std::vector<T> g_in(layouts_[s].input_dim());
      nn::mlp_backward<T>(layouts_[s], stages_[s].row_unchecked(cls), caches[s], g, grads[s + 1].row(cls), g_in);
      g.swap(g_in);
    }
    auto gb = grads[0].row(partitions_.class_index_unchecked(0, i));
    for (std::size_t d = 0; d < g.size(); ++d) gb[d] += g[d];
  }

 private:
  void forward(Index i, std::vector<nn::MlpCache<T>>& caches, std::span<T> out) const {
    if (i >= partitions_.domain_size()) {
      throw std::out_of_range("category index " + std::to_string(i) + " out of range (|S| = " +
                              std::to_string(partitions_.domain_size()) + ")");
    }
    if (out.size() != out_dim_) throw std::invalid_argument("path: output buffer has wrong size");
    auto z0 = base_.row_unchecked(partitions_.class_index_unchecked(0, i));
    std::vector<T> z(z0.begin(), z0.end());
    caches.resize(stages_.size());
    for (std::size_t s = 0; s < stages_.size(); ++s) {
      const Index cls = partitions_.class_index_unchecked(s + 1, i);
      std::vector<T> next(layouts_[s].output_dim());
      nn::mlp_forward<T>(layouts_[s], stages_[s].row_unchecked(cls), z, caches[s], next);
      z.swap(next);
    }
    std::copy(z.begin(), z.end(), out.begin());
  }

  PartitionSet partitions_;
  EmbeddingTable<T> base_;
  std::vector<nn::MlpLayout> layouts_;
  std::vector<EmbeddingTable<T>> stages_;
  std::size_t out_dim_ = 0;
};

// ---------------------------------------------------------------------------
// Uniqueness and parameter accounting
// ---------------------------------------------------------------------------

/// Embeds every category and returns the first pair (a < b) with bit-identical
/// vectors, if any. Works with any scheme exposing domain_size(), out_dim()
/// and lookup(i, out).
template <typename Scheme>
auto check_uniqueness(const Scheme& scheme) -> std::optional<std::pair<Index, Index>> {
  const Index n = scheme.domain_size();
  const std::size_t dim = scheme.out_dim();
  using T = std::remove_cvref_t<decltype(scheme.lookup(Index{0})[0])>;
  std::vector<T> all(n * dim);
  for (Index i = 0; i < n; ++i) scheme.lookup(i, std::span<T>(all.data() + i * dim, dim));
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  auto row = [&](Index i) { return all.begin() + i * dim; };
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return std::lexicographical_compare(row(a), row(a) + dim, row(b), row(b) + dim);
  });
  std::optional<std::pair<Index, Index>> best;
  for (std::size_t r = 1; r < order.size(); ++r) {
    if (std::equal(row(order[r - 1]), row(order[r - 1]) + dim, row(order[r]))) {
      const std::pair<Index, Index> pair = std::minmax(order[r - 1], order[r]);
      if (!best || pair < *best) best = pair;
    }
  }
  return best;
}

/// Closed-form stored-scalar counts, for checking measured counts against.
inline std::size_t full_param_count(Index domain_size, std::size_t dim) { return domain_size * dim; }
inline std::size_t qr_param_count(Index domain_size, Index modulus, std::size_t dim) {
  return ((domain_size + modulus - 1) / modulus) * dim + modulus * dim;
}

}  // namespace compemb
