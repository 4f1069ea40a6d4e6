#pragma once

// DCN-lite and DLRM-lite click-through-rate models over per-feature
// embedding schemes, with thresholded scheme selection.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "compemb/data.hpp"
#include "compemb/embedding.hpp"
#include "compemb/nn.hpp"
#include "compemb/optim.hpp"

namespace compemb {

enum class Architecture { dcn, dlrm };

/// Bound of the uniform embedding initializer: 1/sqrt(D) or sqrt(1/rows).
enum class EmbeddingInit { dim, rows };

enum class EmbeddingScheme { full, hash, qr_mult, comp_concat, comp_add, comp_mult, feature_gen, path };

std::string_view to_string(Architecture arch);
Architecture architecture_from_string(std::string_view name);
std::string_view to_string(EmbeddingScheme scheme);
EmbeddingScheme embedding_scheme_from_string(std::string_view name);
bool is_compositional(EmbeddingScheme scheme);
std::string_view to_string(EmbeddingInit init);
EmbeddingInit embedding_init_from_string(std::string_view name);

/// Layer widths are the published shapes; `width_divisor` shrinks every hidden
/// width (rounding up) so runs fit on a desk. Divisor 1 keeps them as is.
struct ModelConfig {
  Architecture architecture = Architecture::dlrm;
  std::size_t embedding_dim = 16;
  EmbeddingScheme scheme = EmbeddingScheme::full;
  Index collisions = 4;
  /// Compress only features whose cardinality exceeds the threshold.
  Index threshold = 1;
  std::size_t width_divisor = 4;
  std::size_t num_dense = kCriteoDense;
  std::vector<std::size_t> bottom_mlp{512, 256, 64};  // DLRM dense MLP, hidden widths
  std::vector<std::size_t> top_mlp{512, 256};         // DLRM output MLP, hidden widths
  std::vector<std::size_t> deep_mlp{512, 256, 64};    // DCN deep network
  std::size_t cross_depth = 6;
  /// Vector width of every feature under comp_concat; full tables use it
  /// directly, compositional tables split it evenly across partitions.
  std::size_t concat_dim = 32;
  /// Hidden widths of path transforms; empty means affine transforms.
  std::vector<std::size_t> path_hidden{64};
  EmbeddingInit embedding_init = EmbeddingInit::rows;
  /// Start the output layer at zero so every initial prediction is 0.5.
  bool zero_init_output = false;

  void validate() const;
};

/// Resolved embedding layout for one categorical feature.
struct FeaturePlan {
  EmbeddingScheme scheme = EmbeddingScheme::full;
  Index cardinality = 0;
  /// Row count of the remainder / hash table; 0 for full tables.
  Index modulus = 0;
  /// Width of each emitted vector.
  std::size_t vector_dim = 0;
  std::size_t vector_count = 1;
};

/// Full tables for features with cardinality <= threshold, the configured
/// scheme for the rest.
std::vector<FeaturePlan> apply_threshold(const ModelConfig& config, std::span<const Index> cardinalities);

/// Scalars the plan would store per feature, without allocating tables.
std::size_t planned_feature_params(const ModelConfig& config, const FeaturePlan& plan);

using FeatureEmbedding = std::variant<CompositionScheme<float>, PathScheme<float>>;

/// A trainable parameter buffer. Sparse blocks are stepped only on touched rows.
struct ParameterBlock {
  std::string name;
  std::span<float> values;
  std::size_t row_width = 1;
  bool sparse = false;
};

struct ModelGradients {
  std::vector<std::vector<float>> dense;                    // parallel to the dense blocks
  std::vector<std::vector<RowGradients<float>>> features;  // per feature, per table

  void clear();
  void scale(float factor);
};

/// Thrown when a forward pass yields a nonfinite value.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalResult {
  double loss = 0;
  double accuracy = 0;
  std::size_t rows = 0;
};

class Model {
 public:
  Model(ModelConfig config, std::vector<Index> cardinalities, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  const std::vector<Index>& cardinalities() const { return cardinalities_; }
  const std::vector<FeaturePlan>& plan() const { return plan_; }
  const std::vector<FeatureEmbedding>& features() const { return features_; }
  std::vector<FeatureEmbedding>& features() { return features_; }

  std::size_t param_count() const;
  std::size_t embedding_param_count() const;
  std::size_t feature_param_count(std::size_t f) const;

  /// Dense blocks first, then each feature's tables in order.
  std::vector<ParameterBlock> parameter_blocks();
  std::size_t dense_block_count() const;
  ModelGradients make_gradients() const;

  /// Click logit for one record.
  double logit(const Dataset& data, std::size_t row) const;
  double predict(const Dataset& data, std::size_t row) const;

  /// Forward and backward for one record with loss scaled by `weight`;
  /// gradients are accumulated. Returns the unweighted loss.
  double accumulate(const Dataset& data, std::size_t row, double weight, ModelGradients& grads) const;

  EvalResult evaluate(const Dataset& data, RowRange range) const;

 private:
  struct Workspace;
  double forward(const Dataset& data, std::size_t row, Workspace& ws) const;
  std::size_t interaction_vectors() const;
  [[noreturn]] void report_nonfinite(const Dataset& data, std::size_t row, const Workspace& ws) const;

  ModelConfig config_;
  std::vector<Index> cardinalities_;
  std::vector<FeaturePlan> plan_;
  std::vector<FeatureEmbedding> features_;
  std::size_t embedding_width_ = 0;  // total width of all feature vectors
  std::size_t vector_dim_ = 0;       // DLRM interaction width

  // DLRM
  nn::DenseLayerStack<float> bottom_;
  nn::DenseLayerStack<float> top_;
  // DCN
  nn::DenseLayerStack<float> deep_;
  nn::CrossStack<float> cross_;
  nn::DenseLayerStack<float> output_;
};

/// Single-epoch minibatch training over `range` in row order.
struct TrainOptions {
  std::size_t batch_size = 128;
  /// Evaluate on the validation range every this many batches (0 = only at the end).
  std::size_t eval_every = 0;
  /// Cap on validation rows per intermediate evaluation (0 = all).
  std::size_t eval_rows = 0;
};

struct TracePoint {
  std::size_t step = 0;
  std::size_t samples = 0;
  double train_loss = 0;  // mean over batches since the previous point
  double validation_loss = 0;
};

class Trainer {
 public:
  Trainer(Model& model, OptimizerConfig optimizer);

  /// One minibatch step; returns the mean loss of the batch.
  double train_batch(const Dataset& data, std::span<const std::size_t> rows);
  double train_batch(const Dataset& data, RowRange rows);

  std::vector<TracePoint> train_epoch(const DatasetSplit& split, const TrainOptions& options);

  std::size_t steps() const { return steps_; }
  const Optimizer<float>& optimizer() const { return optimizer_; }

 private:
  Model& model_;
  Optimizer<float> optimizer_;
  ModelGradients grads_;
  std::size_t dense_blocks_ = 0;
  std::size_t steps_ = 0;
};

}  // namespace compemb
