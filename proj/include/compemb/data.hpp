#pragma once

// Record storage, Criteo TSV ingestion and a seeded synthetic CTR generator.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "compemb/partitions.hpp"

namespace compemb {

inline constexpr std::size_t kCriteoDense = 13;
inline constexpr std::size_t kCriteoCategorical = 26;

/// Fixed-width records: label, dense values, categorical indices.
struct Dataset {
  std::size_t num_dense = 0;
  std::size_t num_categorical = 0;
  std::vector<float> dense;
  std::vector<std::uint32_t> categorical;
  std::vector<std::uint8_t> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const float> dense_row(std::size_t r) const { return {dense.data() + r * num_dense, num_dense}; }
  std::span<const std::uint32_t> categorical_row(std::size_t r) const {
    return {categorical.data() + r * num_categorical, num_categorical};
  }
  int label(std::size_t r) const { return labels[r]; }

  void push_back(std::uint8_t label, std::span<const float> dense_values, std::span<const std::uint32_t> cats);

  bool operator==(const Dataset&) const = default;
};

struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const RowRange&) const = default;
};

/// Train = first six sevenths of the rows, the last seventh halved into
/// validation then test (validation gets the extra row when odd).
struct SplitRanges {
  RowRange train, validation, test;
};
SplitRanges seventh_split(std::size_t rows);

struct DatasetSplit {
  Dataset data;
  RowRange train, validation, test;
  /// Rows per embedding table for each feature. For Criteo vocabularies this
  /// includes the reserved index 0.
  std::vector<Index> cardinalities;
  /// Criteo only: per-feature training-range enumerations. Vocabulary index v
  /// maps to categorical index v + 1.
  std::vector<Enumeration> vocabularies;
  /// Synthetic only: the generator's click probability per record.
  std::vector<double> true_probabilities;
  std::size_t skipped_lines = 0;
};

/// log(1 + x) for x >= 0; missing and negative values map to 0.
double transform_dense(std::optional<long long> raw);

/// 0 for missing or unseen tokens, otherwise vocabulary index + 1.
std::uint32_t map_categorical(std::string_view token, const Enumeration& vocab);

struct CriteoOptions {
  std::optional<std::size_t> limit;
  /// Loading fails when more than this fraction of lines is malformed.
  double max_skip_fraction = 0.01;
};

/// Reads a tab-separated Criteo file (plain or gzip): label, 13 integer
/// fields, 26 hex-token fields, any of which may be empty.
DatasetSplit load_criteo_tsv(const std::string& path, const CriteoOptions& options = {});

// ---------------------------------------------------------------------------
// Synthetic planted task
// ---------------------------------------------------------------------------

/// Every category of feature f carries a latent vector u in R^latent_dim and
/// a readout weight w_f; the click logit is
///   bias + signal * (sum_f <w_f, u_{f, x_f}> + <v, dense>) / sqrt(F + 1).
/// Category frequencies follow a Zipf law with exponent `zipf` (0 = uniform).
struct SyntheticSpec {
  std::size_t rows = 200'000;
  std::vector<Index> cardinalities{10'000, 10'000, 10'000, 10'000};
  std::size_t num_dense = kCriteoDense;
  std::size_t latent_dim = 4;
  double signal = 3.0;
  double bias = -0.5;
  double zipf = 1.0;
  std::uint64_t seed = 1;

  static SyntheticSpec quick();
};

/// Category sampling weights for a feature of the given cardinality.
std::vector<double> synthetic_category_weights(Index cardinality, double zipf);

DatasetSplit synthetic_generate(const SyntheticSpec& spec);

/// Mean binary entropy of the true click probabilities over `range`: the
/// expected loss of the Bayes-optimal predictor.
double bayes_loss(const DatasetSplit& split, RowRange range);
/// Cross-entropy of predicting the true probabilities on the realized labels.
double oracle_loss(const DatasetSplit& split, RowRange range);

// ---------------------------------------------------------------------------
// Cached binary dataset
// ---------------------------------------------------------------------------

/// Header: magic "CEDS", version, counts and split boundaries as 64-bit
/// little-endian; then one fixed-width record per row: u8 label, num_dense
/// float32, num_categorical uint32 (all little-endian).
void save_dataset_cache(const DatasetSplit& split, const std::string& path);
DatasetSplit load_dataset_cache(const std::string& path);

/// Per-feature cardinalities of the Criteo Kaggle dataset (full vocabulary).
std::vector<Index> criteo_kaggle_cardinalities();

}  // namespace compemb
