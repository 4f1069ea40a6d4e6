#pragma once

// Complementary partitions of a category set.
//
// A category set S is enumerated as {0, ..., |S|-1}. A partition assigns every
// index to one of |P| classes; a family of partitions is complementary when
// no two distinct indices share a class under every partition. Each
// partition later backs one embedding table, with one row per class.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace compemb {

using Index = std::uint64_t;

/// Bijection between raw category tokens and 0..size()-1, in first-occurrence
/// order. Persisted as "token<TAB>index" lines.
class Enumeration {
 public:
  Enumeration() = default;

  /// Throws std::invalid_argument("empty category set") when `tokens` is empty.
  static Enumeration build(std::span<const std::string> tokens);

  /// Returns the index of `token`, assigning the next one if unseen.
  Index insert(std::string_view token);

  std::optional<Index> find(std::string_view token) const;
  Index index_of(std::string_view token) const;
  const std::string& token_of(Index index) const;

  std::size_t size() const { return tokens_.size(); }
  bool empty() const { return tokens_.empty(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(std::ostream& out) const;
  static Enumeration load(std::istream& in);
  void save(const std::string& path) const;
  static Enumeration load(const std::string& path);

  bool operator==(const Enumeration& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, Index> index_;
};

enum class PartitionKind {
  naive,
  quotient_remainder,
  generalized_qr,
  crt,
  hashing,
  explicit_classes,
};

std::string_view to_string(PartitionKind kind);
PartitionKind partition_kind_from_string(std::string_view name);

/// Immutable family of k partitions over {0, ..., domain_size-1}.
///
/// Partition ordinals are 0-based. For the quotient-remainder kind, partition 0
/// is the quotient (ceil(|S|/m) classes) and partition 1 the remainder (m
/// classes). Class indices are computed arithmetically; the one-hot hash
/// matrices are never formed.
class PartitionSet {
 public:
  static PartitionSet naive(Index domain_size);
  static PartitionSet quotient_remainder(Index domain_size, Index modulus);
  static PartitionSet generalized_qr(Index domain_size, std::vector<Index> moduli);
  static PartitionSet crt(Index domain_size, std::vector<Index> moduli);
  /// Single remainder partition i -> i mod m. Not complementary when m < |S|.
  static PartitionSet hashing(Index domain_size, Index modulus);
  /// class_of[j][i] is the class of index i under partition j. Class ids of
  /// each partition must cover 0..max without gaps.
  static PartitionSet explicit_classes(Index domain_size,
                                       std::vector<std::vector<Index>> class_of);
  /// Partitions given as lists of blocks, e.g. {{0},{1,3,4},{2}}. Blocks must be
  /// disjoint, nonempty and cover the domain; block b becomes class b.
  static PartitionSet from_blocks(Index domain_size,
                                  const std::vector<std::vector<std::vector<Index>>>& partitions);

  PartitionKind kind() const { return kind_; }
  Index domain_size() const { return domain_size_; }
  std::size_t count() const { return sizes_.size(); }
  const std::vector<Index>& sizes() const { return sizes_; }
  Index size(std::size_t j) const { return sizes_.at(j); }
  /// Empty for naive and explicit kinds.
  const std::vector<Index>& moduli() const { return moduli_; }
  /// prefix_products()[j] = m_0 * ... * m_{j-1}; entry 0 is 1.
  const std::vector<Index>& prefix_products() const { return prefix_; }
  const std::vector<std::vector<Index>>& explicit_class_of() const { return class_of_; }

  /// Class of category `i` under partition `j`. Throws std::out_of_range.
  Index class_index(std::size_t j, Index i) const;
  /// Same as class_index without bounds checks.
  Index class_index_unchecked(std::size_t j, Index i) const;
  std::vector<Index> class_tuple(Index i) const;

  /// Sum of |P_j|, the number of embedding rows needed for this family.
  Index total_classes() const;

  bool operator==(const PartitionSet& other) const = default;

 private:
  PartitionSet() = default;

  PartitionKind kind_ = PartitionKind::naive;
  Index domain_size_ = 0;
  std::vector<Index> sizes_;
  std::vector<Index> moduli_;
  std::vector<Index> prefix_;
  std::vector<std::vector<Index>> class_of_;
};

struct VerifyOptions {
  /// Largest domain checked over all pairs; larger domains are sampled.
  Index exhaustive_cap = 10'000;
  std::uint64_t sampled_pairs = 1'000'000;
  std::uint64_t seed = 0;
};

struct VerifyReport {
  bool complementary = false;
  /// False when pairs were sampled; a sampled pass is not a proof.
  bool exhaustive = true;
  std::uint64_t pairs_checked = 0;
  /// A pair a < b with identical class tuples, when one was found.
  std::optional<std::pair<Index, Index>> witness;
};

/// Pairwise check that every a != b is separated by some partition.
VerifyReport verify_complementary(const PartitionSet& partitions, const VerifyOptions& options = {});

/// Independent route to the same property: sorts all class tuples and looks
/// for duplicates. Returns the first colliding pair (a < b) if the map
/// i -> (p_1(i), ..., p_k(i)) is not injective.
std::optional<std::pair<Index, Index>> find_tuple_collision(const PartitionSet& partitions);

/// Multiplies with overflow detection; nullopt on overflow.
std::optional<Index> checked_product(std::span<const Index> values);

/// Modulus giving about `collisions` categories per row: ceil(|S| / c).
Index modulus_for_collisions(Index domain_size, Index collisions);

}  // namespace compemb
