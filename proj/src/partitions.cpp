#include "compemb/partitions.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace compemb {

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

Enumeration Enumeration::build(std::span<const std::string> tokens) {
  if (tokens.empty()) {
    throw std::invalid_argument("empty category set");
  }
  Enumeration e;
  for (const auto& t : tokens) e.insert(t);
  return e;
}

Index Enumeration::insert(std::string_view token) {
  std::string key(token);
  auto [it, inserted] = index_.try_emplace(key, tokens_.size());
  if (inserted) tokens_.push_back(std::move(key));
  return it->second;
}

std::optional<Index> Enumeration::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Index Enumeration::index_of(std::string_view token) const {
  auto found = find(token);
  if (!found) throw std::out_of_range("unknown token '" + std::string(token) + "'");
  return *found;
}

const std::string& Enumeration::token_of(Index index) const {
  if (index >= tokens_.size()) {
    throw std::out_of_range("enumeration index " + std::to_string(index) + " out of range");
  }
  return tokens_[index];
}

void Enumeration::save(std::ostream& out) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto& t = tokens_[i];
    if (t.find_first_of("\t\n\r") != std::string::npos) {
      throw std::invalid_argument("token at index " + std::to_string(i) +
                                  " contains a tab or newline and cannot be persisted");
    }
    out << t << '\t' << i << '\n';
  }
}

Enumeration Enumeration::load(std::istream& in) {
  Enumeration e;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.rfind('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("enumeration line " + std::to_string(line_no) + ": missing tab");
    }
    Index expected = 0;
    try {
      expected = std::stoull(line.substr(tab + 1));
    } catch (const std::exception&) {
      throw std::runtime_error("enumeration line " + std::to_string(line_no) + ": bad index");
    }
    if (expected != e.size()) {
      throw std::runtime_error("enumeration line " + std::to_string(line_no) +
                               ": indices must be 0..n-1 in order");
    }
    auto before = e.size();
    e.insert(std::string_view(line).substr(0, tab));
    if (e.size() == before) {
      throw std::runtime_error("enumeration line " + std::to_string(line_no) + ": duplicate token");
    }
  }
  return e;
}

void Enumeration::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  save(out);
}

Enumeration Enumeration::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return load(in);
}

// ---------------------------------------------------------------------------
// PartitionSet
// ---------------------------------------------------------------------------

std::string_view to_string(PartitionKind kind) {
  switch (kind) {
    case PartitionKind::naive: return "naive";
    case PartitionKind::quotient_remainder: return "quotient_remainder";
    case PartitionKind::generalized_qr: return "generalized_qr";
    case PartitionKind::crt: return "crt";
    case PartitionKind::hashing: return "hashing";
    case PartitionKind::explicit_classes: return "explicit";
  }
  return "?";
}

PartitionKind partition_kind_from_string(std::string_view name) {
  for (auto k : {PartitionKind::naive, PartitionKind::quotient_remainder, PartitionKind::generalized_qr,
                 PartitionKind::crt, PartitionKind::hashing, PartitionKind::explicit_classes}) {
    if (to_string(k) == name) return k;
  }
  if (name == "qr") return PartitionKind::quotient_remainder;
  if (name == "hash") return PartitionKind::hashing;
  throw std::invalid_argument("unknown partition kind '" + std::string(name) + "'");
}

std::optional<Index> checked_product(std::span<const Index> values) {
  Index p = 1;
  for (Index v : values) {
    if (__builtin_mul_overflow(p, v, &p)) return std::nullopt;
  }
  return p;
}

Index modulus_for_collisions(Index domain_size, Index collisions) {
  if (collisions == 0) throw std::invalid_argument("collisions must be >= 1");
  return std::max<Index>(1, (domain_size + collisions - 1) / collisions);
}

namespace {

void require_domain(Index domain_size) {
  if (domain_size == 0) throw std::invalid_argument("domain size must be >= 1");
}

void require_moduli(const std::vector<Index>& moduli) {
  if (moduli.empty()) throw std::invalid_argument("at least one modulus is required");
  for (Index m : moduli) {
    if (m == 0) throw std::invalid_argument("zero modulus");
  }
}

void require_cover(Index domain_size, const std::vector<Index>& moduli) {
  auto product = checked_product(moduli);
  if (!product) throw std::overflow_error("product of moduli overflows 64 bits");
  if (*product < domain_size) {
    throw std::invalid_argument("factorization too small: product of moduli " + std::to_string(*product) +
                                " < domain size " + std::to_string(domain_size));
  }
}

}  // namespace

PartitionSet PartitionSet::naive(Index domain_size) {
  require_domain(domain_size);
  PartitionSet ps;
  ps.kind_ = PartitionKind::naive;
  ps.domain_size_ = domain_size;
  ps.sizes_ = {domain_size};
  ps.prefix_ = {1};
  return ps;
}

PartitionSet PartitionSet::quotient_remainder(Index domain_size, Index modulus) {
  require_domain(domain_size);
  if (modulus == 0) throw std::invalid_argument("zero modulus");
  if (modulus > domain_size) {
    std::clog << "warning: modulus " << modulus << " exceeds domain size " << domain_size
              << "; quotient table has a single row\n";
  }
  PartitionSet ps;
  ps.kind_ = PartitionKind::quotient_remainder;
  ps.domain_size_ = domain_size;
  ps.moduli_ = {modulus};
  ps.sizes_ = {(domain_size + modulus - 1) / modulus, modulus};
  ps.prefix_ = {1, modulus};
  return ps;
}

PartitionSet PartitionSet::generalized_qr(Index domain_size, std::vector<Index> moduli) {
  require_domain(domain_size);
  require_moduli(moduli);
  require_cover(domain_size, moduli);
  PartitionSet ps;
  ps.kind_ = PartitionKind::generalized_qr;
  ps.domain_size_ = domain_size;
  ps.sizes_ = moduli;
  ps.prefix_.reserve(moduli.size());
  Index running = 1;
  for (Index m : moduli) {
    ps.prefix_.push_back(running);
    running *= m;  // cannot overflow, checked above
  }
  ps.moduli_ = std::move(moduli);
  return ps;
}

PartitionSet PartitionSet::crt(Index domain_size, std::vector<Index> moduli) {
  require_domain(domain_size);
  require_moduli(moduli);
  for (std::size_t a = 0; a < moduli.size(); ++a) {
    for (std::size_t b = a + 1; b < moduli.size(); ++b) {
      Index g = std::gcd(moduli[a], moduli[b]);
      if (g != 1) {
        throw std::invalid_argument("moduli " + std::to_string(moduli[a]) + " and " + std::to_string(moduli[b]) +
                                    " (positions " + std::to_string(a) + ", " + std::to_string(b) +
                                    ") are not coprime: gcd = " + std::to_string(g));
      }
    }
  }
  require_cover(domain_size, moduli);
  PartitionSet ps;
  ps.kind_ = PartitionKind::crt;
  ps.domain_size_ = domain_size;
  ps.sizes_ = moduli;
  ps.prefix_.assign(moduli.size(), 1);
  ps.moduli_ = std::move(moduli);
  return ps;
}

PartitionSet PartitionSet::hashing(Index domain_size, Index modulus) {
  require_domain(domain_size);
  if (modulus == 0) throw std::invalid_argument("zero modulus");
  PartitionSet ps;
  ps.kind_ = PartitionKind::hashing;
  ps.domain_size_ = domain_size;
  ps.moduli_ = {modulus};
  ps.sizes_ = {modulus};
  ps.prefix_ = {1};
  return ps;
}

PartitionSet PartitionSet::explicit_classes(Index domain_size, std::vector<std::vector<Index>> class_of) {
  require_domain(domain_size);
  if (class_of.empty()) throw std::invalid_argument("at least one partition is required");
  PartitionSet ps;
  ps.kind_ = PartitionKind::explicit_classes;
  ps.domain_size_ = domain_size;
  for (std::size_t j = 0; j < class_of.size(); ++j) {
    const auto& classes = class_of[j];
    if (classes.size() != domain_size) {
      throw std::invalid_argument("partition " + std::to_string(j) + " assigns " + std::to_string(classes.size()) +
                                  " indices, expected " + std::to_string(domain_size));
    }
    Index n_classes = *std::max_element(classes.begin(), classes.end()) + 1;
    std::vector<bool> used(n_classes, false);
    for (Index c : classes) used[c] = true;
    if (std::find(used.begin(), used.end(), false) != used.end()) {
      throw std::invalid_argument("partition " + std::to_string(j) + " has an empty class id");
    }
    ps.sizes_.push_back(n_classes);
  }
  ps.prefix_.assign(class_of.size(), 1);
  ps.class_of_ = std::move(class_of);
  return ps;
}

PartitionSet PartitionSet::from_blocks(Index domain_size,
                                       const std::vector<std::vector<std::vector<Index>>>& partitions) {
  require_domain(domain_size);
  constexpr Index unassigned = ~Index{0};
  std::vector<std::vector<Index>> class_of;
  for (std::size_t j = 0; j < partitions.size(); ++j) {
    std::vector<Index> classes(domain_size, unassigned);
    for (std::size_t b = 0; b < partitions[j].size(); ++b) {
      const auto& block = partitions[j][b];
      if (block.empty()) {
        throw std::invalid_argument("partition " + std::to_string(j) + " has an empty block");
      }
      for (Index x : block) {
        if (x >= domain_size) {
          throw std::out_of_range("element " + std::to_string(x) + " outside the domain");
        }
        if (classes[x] != unassigned) {
          throw std::invalid_argument("element " + std::to_string(x) + " appears twice in partition " +
                                      std::to_string(j));
        }
        classes[x] = b;
      }
    }
    for (Index x = 0; x < domain_size; ++x) {
      if (classes[x] == unassigned) {
        throw std::invalid_argument("element " + std::to_string(x) + " not covered by partition " +
                                    std::to_string(j));
      }
    }
    class_of.push_back(std::move(classes));
  }
  return explicit_classes(domain_size, std::move(class_of));
}

Index PartitionSet::class_index_unchecked(std::size_t j, Index i) const {
  switch (kind_) {
    case PartitionKind::naive:
      return i;
    case PartitionKind::quotient_remainder:
      return j == 0 ? i / moduli_[0] : i % moduli_[0];
    case PartitionKind::generalized_qr:
      return (i / prefix_[j]) % moduli_[j];
    case PartitionKind::crt:
    case PartitionKind::hashing:
      return i % moduli_[j];
    case PartitionKind::explicit_classes:
      return class_of_[j][i];
  }
  return 0;
}

Index PartitionSet::class_index(std::size_t j, Index i) const {
  if (j >= count()) {
    throw std::out_of_range("partition ordinal " + std::to_string(j) + " out of range (k = " +
                            std::to_string(count()) + ")");
  }
  if (i >= domain_size_) {
    throw std::out_of_range("category index " + std::to_string(i) + " out of range (|S| = " +
                            std::to_string(domain_size_) + ")");
  }
  return class_index_unchecked(j, i);
}

std::vector<Index> PartitionSet::class_tuple(Index i) const {
  std::vector<Index> tuple(count());
  for (std::size_t j = 0; j < count(); ++j) tuple[j] = class_index(j, i);
  return tuple;
}

Index PartitionSet::total_classes() const {
  return std::accumulate(sizes_.begin(), sizes_.end(), Index{0});
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

namespace {

std::vector<Index> flat_tuples(const PartitionSet& ps) {
  const std::size_t k = ps.count();
  std::vector<Index> flat(ps.domain_size() * k);
  for (Index i = 0; i < ps.domain_size(); ++i) {
    for (std::size_t j = 0; j < k; ++j) flat[i * k + j] = ps.class_index_unchecked(j, i);
  }
  return flat;
}

bool same_tuple(const std::vector<Index>& flat, std::size_t k, Index a, Index b) {
  return std::equal(flat.begin() + a * k, flat.begin() + (a + 1) * k, flat.begin() + b * k);
}

}  // namespace

VerifyReport verify_complementary(const PartitionSet& ps, const VerifyOptions& options) {
  VerifyReport report;
  const Index n = ps.domain_size();
  const std::size_t k = ps.count();
  const auto flat = flat_tuples(ps);

  if (n <= options.exhaustive_cap || n < 2) {
    report.exhaustive = true;
    for (Index a = 0; a < n; ++a) {
      for (Index b = a + 1; b < n; ++b) {
        ++report.pairs_checked;
        if (same_tuple(flat, k, a, b)) {
          report.witness = {a, b};
          return report;
        }
      }
    }
    report.complementary = true;
    return report;
  }

  report.exhaustive = false;
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<Index> pick(0, n - 1);
  std::uniform_int_distribution<Index> pick_other(0, n - 2);
  for (std::uint64_t s = 0; s < options.sampled_pairs; ++s) {
    const Index a = pick(rng);
    Index b = pick_other(rng);
    if (b >= a) ++b;  // uniform over indices other than a
    ++report.pairs_checked;
    if (same_tuple(flat, k, a, b)) {
      report.witness = std::minmax(a, b);
      return report;
    }
  }
  report.complementary = true;
  return report;
}

std::optional<std::pair<Index, Index>> find_tuple_collision(const PartitionSet& ps) {
  const std::size_t k = ps.count();
  const auto flat = flat_tuples(ps);
  std::vector<Index> order(ps.domain_size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return std::lexicographical_compare(flat.begin() + a * k, flat.begin() + (a + 1) * k, flat.begin() + b * k,
                                        flat.begin() + (b + 1) * k);
  });
  std::optional<std::pair<Index, Index>> best;
  for (std::size_t r = 1; r < order.size(); ++r) {
    if (same_tuple(flat, k, order[r - 1], order[r])) {
      const std::pair<Index, Index> pair = std::minmax(order[r - 1], order[r]);
      if (!best || pair < *best) best = pair;
    }
  }
  return best;
}

}  // namespace compemb
