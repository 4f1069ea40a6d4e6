#pragma once

// Run configuration and the commands behind the compemb CLI: train, verify,
// params, gradcheck and bench. Every command is a plain function so the CLI,
// the Python module and the tests drive the same code.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "compemb/data.hpp"
#include "compemb/model.hpp"
#include "compemb/partitions.hpp"

namespace compemb {

/// Version of the summary.json / run_config.json layout.
inline constexpr int kSchemaVersion = 1;

struct DataSource {
  enum class Kind { synthetic, criteo, cache };
  Kind kind = Kind::synthetic;
  std::string path;
  std::optional<std::size_t> limit;
  SyntheticSpec synthetic;
};

struct RunConfig {
  std::string command = "train";
  DataSource data;
  ModelConfig model;
  OptimizerKind optimizer = OptimizerKind::adagrad;
  std::uint64_t seed = 1;
  std::size_t trials = 5;
  /// Sweeps; empty means the single value in `model`.
  std::vector<Index> collisions;
  std::vector<Index> thresholds;
  /// Run trials one after another instead of concurrently.
  bool deterministic = false;
  std::string out_dir = "runs/latest";
  TrainOptions train{128, 50, 2000};
};

nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
nlohmann::json to_json(const SyntheticSpec& spec);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j, SyntheticSpec base = {});
nlohmann::json to_json(const RunConfig& config);
/// Keys missing from `j` keep the values in `base`.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});
RunConfig load_run_config(const std::string& path);

/// kind, domain_size, moduli (and class arrays for explicit partitions).
nlohmann::json to_json(const PartitionSet& partitions);
PartitionSet partition_set_from_json(const nlohmann::json& j);

/// Loads the configured dataset. For synthetic data `trial` offsets the seed.
DatasetSplit load_data(const DataSource& source, std::size_t trial = 0);

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrialResult {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::vector<TracePoint> trace;
  EvalResult validation;
  EvalResult test;
  std::size_t params = 0;
  std::size_t embedding_params = 0;
};

struct SweepPointResult {
  Index collisions = 0;
  Index threshold = 0;
  std::string directory;
  std::vector<TrialResult> trials;
  nlohmann::json summary;
};

/// Trains `trials` models per sweep point and writes metrics.csv, curves.csv,
/// summary.json and run_config.json under the output directory (one
/// subdirectory per point when sweeping).
std::vector<SweepPointResult> run_train(const RunConfig& config, std::ostream* log = nullptr);

/// A single trial, without writing files.
TrialResult train_trial(const RunConfig& config, const DatasetSplit& split, std::size_t trial);

struct MeanStd {
  double mean = 0;
  double std = 0;  // sample standard deviation; 0 for one value
};
MeanStd mean_std(const std::vector<double>& values);

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct VerifyCommandResult {
  VerifyReport report;
  /// Independent tuple-sorting check; empty when the map is injective or the
  /// domain was too large to enumerate.
  std::optional<std::pair<Index, Index>> tuple_collision;
  bool tuple_check_run = false;
  bool passed() const { return report.complementary && !tuple_collision; }
};

/// Throws when the domain exceeds the exhaustive cap and `allow_sampled` is false.
VerifyCommandResult run_verify(const PartitionSet& partitions, const VerifyOptions& options, bool allow_sampled);
void print_verify(std::ostream& out, const PartitionSet& partitions, const VerifyCommandResult& result);

// ---------------------------------------------------------------------------
// params
// ---------------------------------------------------------------------------

struct FeatureParams {
  std::size_t feature = 0;
  FeaturePlan plan;
  std::size_t params = 0;
};

struct ParamsReport {
  Index threshold = 0;
  Index collisions = 0;
  std::vector<FeatureParams> features;
  std::size_t embedding_params = 0;
  std::size_t dense_params = 0;
  std::size_t total() const { return embedding_params + dense_params; }
};

/// Closed-form count of the dense (MLP / cross) parameters of a model.
std::size_t dense_param_count(const ModelConfig& config, std::span<const Index> cardinalities);

ParamsReport count_params(const ModelConfig& config, std::span<const Index> cardinalities);
void print_params(std::ostream& out, const ParamsReport& report, bool per_feature);

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckOptions {
  std::uint64_t seed = 0;
  double tolerance = 1e-5;
  /// Negates every analytic gradient, so each check must fail.
  bool inject_sign_flip = false;
  std::vector<std::size_t> path_hidden_sizes{16, 32, 64, 128};
};

struct GradcheckResult {
  std::string name;
  double max_relative_error = 0;
  bool passed = false;
};

std::vector<GradcheckResult> run_gradchecks(const GradcheckOptions& options);

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchReport {
  std::string scheme;
  Index domain_size = 0;
  std::size_t dim = 0;
  std::uint64_t iterations = 0;
  double seconds = 0;
  double lookups_per_second = 0;
  std::size_t params = 0;
  std::size_t resident_bytes = 0;
  double checksum = 0;
};

/// Scheme is one of full, hash, qr; `modulus` sizes the hash / remainder table.
BenchReport run_bench(const std::string& scheme, Index domain_size, std::size_t dim, Index modulus,
                      std::uint64_t iterations, std::uint64_t seed);

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

/// Writes manifest.json plus one binary file per parameter block (header:
/// rows and width as 64-bit little-endian; payload: row-major float32).
void save_checkpoint(Model& model, const std::string& directory);
/// Restores parameters into a model built with the same config and cardinalities.
void load_checkpoint(Model& model, const std::string& directory);

}  // namespace compemb
