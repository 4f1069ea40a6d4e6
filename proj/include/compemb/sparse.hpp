#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

namespace compemb {

/// Gradient rows for a row-structured parameter block (an embedding table or a
/// family of per-class transforms). Only touched rows are stored. Rows keep
/// the order in which they were first touched, so accumulation over a batch is
/// deterministic.
template <typename T>
class RowGradients {
 public:
  explicit RowGradients(std::size_t width = 0) : width_(width) {}

  std::size_t width() const { return width_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }

  /// Gradient slot for `row`, zero-initialized on first touch.
  std::span<T> row(std::uint64_t row) {
    auto [it, inserted] = slot_.try_emplace(row, rows_.size());
    if (inserted) {
      rows_.push_back(row);
      values_.resize(values_.size() + width_, T(0));
    }
    return {values_.data() + it->second * width_, width_};
  }

  std::uint64_t row_id(std::size_t k) const { return rows_[k]; }
  std::span<const T> values(std::size_t k) const { return {values_.data() + k * width_, width_}; }
  std::span<T> values(std::size_t k) { return {values_.data() + k * width_, width_}; }

  const T* find(std::uint64_t row) const {
    auto it = slot_.find(row);
    return it == slot_.end() ? nullptr : values_.data() + it->second * width_;
  }

  void scale(T factor) {
    for (auto& v : values_) v *= factor;
  }

  void clear() {
    rows_.clear();
    values_.clear();
    slot_.clear();
  }

 private:
  std::size_t width_;
  std::vector<std::uint64_t> rows_;
  std::vector<T> values_;
  std::unordered_map<std::uint64_t, std::size_t> slot_;
};

}  // namespace compemb
