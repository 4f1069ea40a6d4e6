#include "compemb/model.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>

namespace compemb {

std::string_view to_string(Architecture arch) { return arch == Architecture::dcn ? "dcn" : "dlrm"; }

Architecture architecture_from_string(std::string_view name) {
  if (name == "dcn") return Architecture::dcn;
  if (name == "dlrm") return Architecture::dlrm;
  throw std::invalid_argument("unknown architecture '" + std::string(name) + "'");
}

namespace {

constexpr std::pair<EmbeddingScheme, std::string_view> kSchemeNames[] = {
    {EmbeddingScheme::full, "full"},
    {EmbeddingScheme::hash, "hash"},
    {EmbeddingScheme::qr_mult, "qr_mult"},
    {EmbeddingScheme::comp_concat, "comp_concat"},
    {EmbeddingScheme::comp_add, "comp_add"},
    {EmbeddingScheme::comp_mult, "comp_mult"},
    {EmbeddingScheme::feature_gen, "feature_gen"},
    {EmbeddingScheme::path, "path"},
};

std::size_t scaled(std::size_t width, std::size_t divisor) {
  return std::max<std::size_t>(1, (width + divisor - 1) / divisor);
}

std::vector<std::size_t> scaled_dims(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t divisor,
                                     std::optional<std::size_t> out) {
  std::vector<std::size_t> dims{in};
  for (auto h : hidden) dims.push_back(scaled(h, divisor));
  if (out) dims.push_back(*out);
  return dims;
}

Index quotient_rows(Index n, Index m) { return (n + m - 1) / m; }

}  // namespace

std::string_view to_string(EmbeddingScheme scheme) {
  for (auto [s, name] : kSchemeNames) {
    if (s == scheme) return name;
  }
  return "?";
}

EmbeddingScheme embedding_scheme_from_string(std::string_view name) {
  for (auto [s, n] : kSchemeNames) {
    if (n == name) return s;
  }
  if (name == "qr") return EmbeddingScheme::qr_mult;
  if (name == "feature") return EmbeddingScheme::feature_gen;
  throw std::invalid_argument("unknown embedding scheme '" + std::string(name) + "'");
}

bool is_compositional(EmbeddingScheme scheme) {
  return scheme != EmbeddingScheme::full && scheme != EmbeddingScheme::hash;
}

std::string_view to_string(EmbeddingInit init) { return init == EmbeddingInit::dim ? "dim" : "rows"; }

EmbeddingInit embedding_init_from_string(std::string_view name) {
  if (name == "dim") return EmbeddingInit::dim;
  if (name == "rows") return EmbeddingInit::rows;
  throw std::invalid_argument("unknown embedding init '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (embedding_dim == 0) throw std::invalid_argument("embedding_dim must be >= 1");
  if (collisions == 0) throw std::invalid_argument("collisions must be >= 1");
  if (threshold == 0) throw std::invalid_argument("threshold must be >= 1");
  if (width_divisor == 0) throw std::invalid_argument("width_divisor must be >= 1");
  if (scheme == EmbeddingScheme::comp_concat && (concat_dim == 0 || concat_dim % 2 != 0)) {
    throw std::invalid_argument("concat_dim must be even and positive for comp_concat");
  }
  if (architecture == Architecture::dcn && deep_mlp.empty()) {
    throw std::invalid_argument("the DCN deep network needs at least one hidden layer");
  }
}

// ---------------------------------------------------------------------------
// Planning
// ---------------------------------------------------------------------------

std::vector<FeaturePlan> apply_threshold(const ModelConfig& config, std::span<const Index> cardinalities) {
  const std::size_t vd =
      config.scheme == EmbeddingScheme::comp_concat ? config.concat_dim : config.embedding_dim;
  std::vector<FeaturePlan> plans;
  for (std::size_t f = 0; f < cardinalities.size(); ++f) {
    const Index n = cardinalities[f];
    if (n == 0) throw std::invalid_argument("feature " + std::to_string(f) + " has cardinality 0");
    FeaturePlan p;
    p.cardinality = n;
    p.vector_dim = vd;
    if (config.scheme == EmbeddingScheme::full || n <= config.threshold) {
      p.scheme = EmbeddingScheme::full;
    } else {
      p.scheme = config.scheme;
      p.modulus = modulus_for_collisions(n, config.collisions);
      if (p.scheme == EmbeddingScheme::feature_gen) {
        p.vector_dim = config.embedding_dim;
        p.vector_count = 2;
      }
    }
    plans.push_back(p);
  }
  return plans;
}

namespace {

nn::MlpLayout path_layout(const ModelConfig& config) {
  std::vector<std::size_t> dims{config.embedding_dim};
  dims.insert(dims.end(), config.path_hidden.begin(), config.path_hidden.end());
  dims.push_back(config.embedding_dim);
  return nn::MlpLayout(dims);
}

}  // namespace

std::size_t planned_feature_params(const ModelConfig& config, const FeaturePlan& p) {
  const Index n = p.cardinality;
  const Index m = p.modulus;
  switch (p.scheme) {
    case EmbeddingScheme::full:
      return n * p.vector_dim;
    case EmbeddingScheme::hash:
      return m * p.vector_dim;
    case EmbeddingScheme::qr_mult:
    case EmbeddingScheme::comp_add:
    case EmbeddingScheme::comp_mult:
    case EmbeddingScheme::feature_gen:
      return (quotient_rows(n, m) + m) * config.embedding_dim;
    case EmbeddingScheme::comp_concat:
      return (quotient_rows(n, m) + m) * (config.concat_dim / 2);
    case EmbeddingScheme::path:
      return m * config.embedding_dim + quotient_rows(n, m) * path_layout(config).param_count();
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct Model::Workspace {
  std::vector<float> embeddings;
  std::vector<float> vectors;  // DLRM: bottom output then embeddings
  std::vector<float> bottom_out;
  std::vector<float> top_in;
  nn::MlpCache<float> bottom_cache;
  nn::MlpCache<float> top_cache;
  std::vector<float> x0;
  std::vector<float> deep_out;
  std::vector<float> cross_out;
  std::vector<float> combined;
  std::vector<std::vector<float>> cross_states;
  nn::MlpCache<float> deep_cache;
  nn::MlpCache<float> output_cache;
};

Model::Model(ModelConfig config, std::vector<Index> cardinalities, std::uint64_t seed)
    : config_(std::move(config)), cardinalities_(std::move(cardinalities)) {
  config_.validate();
  plan_ = apply_threshold(config_, cardinalities_);
  vector_dim_ = config_.scheme == EmbeddingScheme::comp_concat ? config_.concat_dim : config_.embedding_dim;
  if (config_.num_dense == 0 && cardinalities_.empty()) {
    throw std::invalid_argument("model needs at least one dense or categorical feature");
  }

  std::mt19937_64 rng(seed);
  for (const auto& p : plan_) {
    const Index n = p.cardinality;
    const Index m = p.modulus;
    const std::size_t d = config_.embedding_dim;
    switch (p.scheme) {
      case EmbeddingScheme::full:
        features_.emplace_back(CompositionScheme<float>(
            PartitionSet::naive(n), {EmbeddingTable<float>::uniform(n, p.vector_dim, rng)}, CompositionOp::concat));
        break;
      case EmbeddingScheme::hash:
        features_.emplace_back(CompositionScheme<float>(
            PartitionSet::hashing(n, m), {EmbeddingTable<float>::uniform(m, p.vector_dim, rng)},
            CompositionOp::concat));
        break;
      case EmbeddingScheme::qr_mult:
      case EmbeddingScheme::comp_mult:
        features_.emplace_back(
            CompositionScheme<float>::random(PartitionSet::quotient_remainder(n, m), {d}, CompositionOp::mult, rng));
        break;
      case EmbeddingScheme::comp_add:
        features_.emplace_back(
            CompositionScheme<float>::random(PartitionSet::quotient_remainder(n, m), {d}, CompositionOp::add, rng));
        break;
      case EmbeddingScheme::comp_concat:
        features_.emplace_back(CompositionScheme<float>::random(
            PartitionSet::quotient_remainder(n, m), {config_.concat_dim / 2}, CompositionOp::concat, rng));
        break;
      case EmbeddingScheme::feature_gen:
        features_.emplace_back(CompositionScheme<float>::random(PartitionSet::quotient_remainder(n, m), {d},
                                                                CompositionOp::feature_generation, rng));
        break;
      case EmbeddingScheme::path:
        // Base table over the remainder classes, one transform per quotient class.
        features_.emplace_back(PathScheme<float>::random(
            PartitionSet::generalized_qr(n, {m, quotient_rows(n, m)}), d, config_.path_hidden, rng));
        break;
    }
    embedding_width_ += p.vector_dim * p.vector_count;
    if (config_.embedding_init == EmbeddingInit::rows) {
      auto redraw = [&](EmbeddingTable<float>& t) { t.fill_uniform(std::sqrt(1.0 / static_cast<double>(t.rows())), rng); };
      if (auto* comp = std::get_if<CompositionScheme<float>>(&features_.back())) {
        for (auto& t : comp->tables()) redraw(t);
      } else {
        redraw(std::get<PathScheme<float>>(features_.back()).base());
      }
    }
  }

  const std::size_t div = config_.width_divisor;
  if (config_.architecture == Architecture::dlrm) {
    if (config_.num_dense > 0) {
      bottom_ = nn::DenseLayerStack<float>(
          nn::MlpLayout(scaled_dims(config_.num_dense, config_.bottom_mlp, div, vector_dim_), nn::Activation::relu));
      bottom_.init(rng);
    }
    const std::size_t n_vec = interaction_vectors();
    const std::size_t top_in = (config_.num_dense > 0 ? vector_dim_ : 0) + nn::interaction_count(n_vec);
    if (top_in == 0) throw std::invalid_argument("DLRM needs dense features or at least two embedding vectors");
    top_ = nn::DenseLayerStack<float>(nn::MlpLayout(scaled_dims(top_in, config_.top_mlp, div, 1)));
    top_.init(rng);
    if (config_.zero_init_output) {
      const auto& lay = top_.layout();
      auto params = top_.params();
      std::fill(params.begin() + lay.weight_offset(lay.layers() - 1), params.end(), 0.0f);
    }
  } else {
    const std::size_t x0 = config_.num_dense + embedding_width_;
    deep_ = nn::DenseLayerStack<float>(
        nn::MlpLayout(scaled_dims(x0, config_.deep_mlp, div, std::nullopt), nn::Activation::relu));
    deep_.init(rng);
    cross_ = nn::CrossStack<float>(x0, config_.cross_depth);
    cross_.init(rng);
    output_ = nn::DenseLayerStack<float>(nn::MlpLayout({deep_.layout().output_dim() + x0, 1}));
    output_.init(rng);
    if (config_.zero_init_output) {
      auto params = output_.params();
      std::fill(params.begin(), params.end(), 0.0f);
    }
  }
}

std::size_t Model::interaction_vectors() const {
  return (config_.num_dense > 0 ? 1 : 0) + embedding_width_ / vector_dim_;
}

std::size_t Model::feature_param_count(std::size_t f) const {
  return std::visit([](const auto& s) { return s.param_count(); }, features_.at(f));
}

std::size_t Model::embedding_param_count() const {
  std::size_t n = 0;
  for (std::size_t f = 0; f < features_.size(); ++f) n += feature_param_count(f);
  return n;
}

std::size_t Model::param_count() const {
  std::size_t n = embedding_param_count();
  if (config_.architecture == Architecture::dlrm) {
    n += bottom_.params().size() + top_.params().size();
  } else {
    n += deep_.params().size() + cross_.param_count() + output_.params().size();
  }
  return n;
}

std::size_t Model::dense_block_count() const {
  if (config_.architecture == Architecture::dlrm) return config_.num_dense > 0 ? 2 : 1;
  return 3;
}

std::vector<ParameterBlock> Model::parameter_blocks() {
  std::vector<ParameterBlock> blocks;
  auto dense = [&](std::string name, std::span<float> v) { blocks.push_back({std::move(name), v, v.size(), false}); };
  if (config_.architecture == Architecture::dlrm) {
    if (config_.num_dense > 0) dense("bottom_mlp", bottom_.params());
    dense("top_mlp", top_.params());
  } else {
    dense("deep_mlp", deep_.params());
    dense("cross", cross_.params());
    dense("output", output_.params());
  }
  for (std::size_t f = 0; f < features_.size(); ++f) {
    const std::string prefix = "feature" + std::to_string(f);
    if (auto* comp = std::get_if<CompositionScheme<float>>(&features_[f])) {
      auto& tables = comp->tables();
      for (std::size_t j = 0; j < tables.size(); ++j) {
        blocks.push_back({prefix + ".table" + std::to_string(j), tables[j].values(), tables[j].dim(), true});
      }
    } else {
      auto& path = std::get<PathScheme<float>>(features_[f]);
      blocks.push_back({prefix + ".base", path.base().values(), path.base().dim(), true});
      auto& stages = path.stages();
      for (std::size_t s = 0; s < stages.size(); ++s) {
        blocks.push_back({prefix + ".stage" + std::to_string(s + 1), stages[s].values(), stages[s].dim(), true});
      }
    }
  }
  return blocks;
}

ModelGradients Model::make_gradients() const {
  ModelGradients g;
  if (config_.architecture == Architecture::dlrm) {
    if (config_.num_dense > 0) g.dense.emplace_back(bottom_.params().size(), 0.0f);
    g.dense.emplace_back(top_.params().size(), 0.0f);
  } else {
    g.dense.emplace_back(deep_.params().size(), 0.0f);
    g.dense.emplace_back(cross_.param_count(), 0.0f);
    g.dense.emplace_back(output_.params().size(), 0.0f);
  }
  for (const auto& fe : features_) {
    g.features.push_back(std::visit([](const auto& s) { return s.make_gradients(); }, fe));
  }
  return g;
}

void ModelGradients::clear() {
  for (auto& d : dense) std::fill(d.begin(), d.end(), 0.0f);
  for (auto& f : features) {
    for (auto& t : f) t.clear();
  }
}

void ModelGradients::scale(float factor) {
  for (auto& d : dense) {
    for (auto& v : d) v *= factor;
  }
  for (auto& f : features) {
    for (auto& t : f) t.scale(factor);
  }
}

double Model::forward(const Dataset& data, std::size_t row, Workspace& ws) const {
  if (data.num_dense != config_.num_dense || data.num_categorical != features_.size()) {
    throw std::invalid_argument("dataset columns (" + std::to_string(data.num_dense) + " dense, " +
                                std::to_string(data.num_categorical) + " categorical) do not match the model");
  }
  const auto cats = data.categorical_row(row);
  const auto dense = data.dense_row(row);

  ws.embeddings.resize(embedding_width_);
  std::size_t offset = 0;
  for (std::size_t f = 0; f < features_.size(); ++f) {
    const std::size_t width = plan_[f].vector_dim * plan_[f].vector_count;
    std::span<float> out(ws.embeddings.data() + offset, width);
    std::visit([&](const auto& s) { s.lookup(cats[f], out); }, features_[f]);
    offset += width;
  }

  double logit = 0;
  if (config_.architecture == Architecture::dlrm) {
    const bool has_bottom = config_.num_dense > 0;
    ws.vectors.clear();
    if (has_bottom) {
      ws.bottom_out.resize(vector_dim_);
      bottom_.forward(dense, ws.bottom_cache, ws.bottom_out);
      ws.vectors.insert(ws.vectors.end(), ws.bottom_out.begin(), ws.bottom_out.end());
    }
    ws.vectors.insert(ws.vectors.end(), ws.embeddings.begin(), ws.embeddings.end());
    const std::size_t n_vec = interaction_vectors();
    ws.top_in.assign(top_.layout().input_dim(), 0.0f);
    std::size_t head = 0;
    if (has_bottom) {
      std::copy(ws.bottom_out.begin(), ws.bottom_out.end(), ws.top_in.begin());
      head = vector_dim_;
    }
    nn::dot_interaction_forward<float>(ws.vectors, vector_dim_,
                                       std::span<float>(ws.top_in.data() + head, nn::interaction_count(n_vec)));
    float out = 0;
    top_.forward(ws.top_in, ws.top_cache, std::span<float>(&out, 1));
    logit = out;
  } else {
    ws.x0.assign(dense.begin(), dense.end());
    ws.x0.insert(ws.x0.end(), ws.embeddings.begin(), ws.embeddings.end());
    ws.deep_out.resize(deep_.layout().output_dim());
    deep_.forward(ws.x0, ws.deep_cache, ws.deep_out);
    ws.cross_out.resize(ws.x0.size());
    cross_.forward(ws.x0, ws.cross_states, ws.cross_out);
    ws.combined = ws.deep_out;
    ws.combined.insert(ws.combined.end(), ws.cross_out.begin(), ws.cross_out.end());
    float out = 0;
    output_.forward(ws.combined, ws.output_cache, std::span<float>(&out, 1));
    logit = out;
  }
  if (!std::isfinite(logit)) report_nonfinite(data, row, ws);
  return logit;
}

void Model::report_nonfinite(const Dataset& data, std::size_t row, const Workspace& ws) const {
  std::ostringstream msg;
  msg << "nonfinite logit at record " << row;
  const auto cats = data.categorical_row(row);
  std::size_t offset = 0;
  for (std::size_t f = 0; f < features_.size(); ++f) {
    const std::size_t width = plan_[f].vector_dim * plan_[f].vector_count;
    for (std::size_t d = 0; d < width; ++d) {
      if (!std::isfinite(ws.embeddings[offset + d])) {
        msg << ": feature " << f << ", category " << cats[f] << " has a nonfinite embedding";
        throw TrainingError(msg.str());
      }
    }
    offset += width;
  }
  msg << ": embeddings finite, dense network diverged";
  throw TrainingError(msg.str());
}

double Model::logit(const Dataset& data, std::size_t row) const {
  Workspace ws;
  return forward(data, row, ws);
}

double Model::predict(const Dataset& data, std::size_t row) const { return nn::sigmoid(logit(data, row)); }

double Model::accumulate(const Dataset& data, std::size_t row, double weight, ModelGradients& grads) const {
  thread_local Workspace ws;
  const double z = forward(data, row, ws);
  const double y = data.label(row);
  const auto lg = nn::bce_with_logit(z, y);
  const float dz = static_cast<float>(weight * lg.grad);
  const std::span<const float> upstream(&dz, 1);

  std::vector<float> g_emb(embedding_width_, 0.0f);
  if (config_.architecture == Architecture::dlrm) {
    const bool has_bottom = config_.num_dense > 0;
    std::vector<float> g_top_in(top_.layout().input_dim());
    top_.backward(ws.top_cache, upstream, grads.dense[has_bottom ? 1 : 0], g_top_in);
    const std::size_t head = has_bottom ? vector_dim_ : 0;
    std::vector<float> g_vectors(ws.vectors.size(), 0.0f);
    nn::dot_interaction_backward<float>(
        ws.vectors, vector_dim_,
        std::span<const float>(g_top_in.data() + head, g_top_in.size() - head), g_vectors);
    if (has_bottom) {
      std::vector<float> g_bottom(vector_dim_);
      for (std::size_t d = 0; d < vector_dim_; ++d) g_bottom[d] = g_top_in[d] + g_vectors[d];
      bottom_.backward(ws.bottom_cache, g_bottom, grads.dense[0], {});
    }
    std::copy(g_vectors.begin() + head, g_vectors.end(), g_emb.begin());
  } else {
    std::vector<float> g_combined(ws.combined.size());
    output_.backward(ws.output_cache, upstream, grads.dense[2], g_combined);
    const std::size_t deep_w = ws.deep_out.size();
    std::vector<float> g_x0_deep(ws.x0.size());
    deep_.backward(ws.deep_cache, std::span<const float>(g_combined.data(), deep_w), grads.dense[0], g_x0_deep);
    std::vector<float> g_x0_cross(ws.x0.size());
    cross_.backward(ws.cross_states, std::span<const float>(g_combined.data() + deep_w, ws.x0.size()),
                    grads.dense[1], g_x0_cross);
    for (std::size_t d = 0; d < embedding_width_; ++d) {
      g_emb[d] = g_x0_deep[config_.num_dense + d] + g_x0_cross[config_.num_dense + d];
    }
  }

  const auto cats = data.categorical_row(row);
  std::size_t offset = 0;
  for (std::size_t f = 0; f < features_.size(); ++f) {
    const std::size_t width = plan_[f].vector_dim * plan_[f].vector_count;
    std::span<const float> g(g_emb.data() + offset, width);
    std::visit([&](const auto& s) { s.backward(cats[f], g, grads.features[f]); }, features_[f]);
    offset += width;
  }
  return lg.loss;
}

EvalResult Model::evaluate(const Dataset& data, RowRange range) const {
  Workspace ws;
  EvalResult r;
  double loss = 0;
  std::size_t correct = 0;
  for (std::size_t row = range.begin; row < range.end; ++row) {
    const double p = nn::sigmoid(forward(data, row, ws));
    const int y = data.label(row);
    loss += nn::bce(p, y).loss;
    if ((p >= 0.5 ? 1 : 0) == y) ++correct;
  }
  r.rows = range.size();
  if (r.rows > 0) {
    r.loss = loss / static_cast<double>(r.rows);
    r.accuracy = static_cast<double>(correct) / static_cast<double>(r.rows);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

Trainer::Trainer(Model& model, OptimizerConfig optimizer)
    : model_(model), optimizer_(optimizer), grads_(model.make_gradients()) {
  dense_blocks_ = model_.dense_block_count();
  for (auto& b : model_.parameter_blocks()) optimizer_.add_block(b.name, b.values, b.row_width);
}

double Trainer::train_batch(const Dataset& data, std::span<const std::size_t> rows) {
  if (rows.empty()) return 0.0;
  grads_.clear();
  const double weight = 1.0 / static_cast<double>(rows.size());
  double loss = 0;
  for (auto row : rows) {
    try {
      loss += model_.accumulate(data, row, weight, grads_);
    } catch (const TrainingError& e) {
      throw TrainingError("step " + std::to_string(steps_) + ": " + e.what());
    }
  }
  optimizer_.begin_step();
  std::size_t id = 0;
  for (; id < dense_blocks_; ++id) optimizer_.step_dense(id, grads_.dense[id]);
  for (auto& feature : grads_.features) {
    for (auto& table : feature) optimizer_.step_rows(id++, table);
  }
  ++steps_;
  return loss * weight;
}

double Trainer::train_batch(const Dataset& data, RowRange rows) {
  std::vector<std::size_t> idx(rows.size());
  std::iota(idx.begin(), idx.end(), rows.begin);
  return train_batch(data, idx);
}

std::vector<TracePoint> Trainer::train_epoch(const DatasetSplit& split, const TrainOptions& options) {
  if (options.batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  std::vector<TracePoint> trace;
  RowRange eval_range = split.validation;
  if (options.eval_rows > 0 && eval_range.size() > options.eval_rows) {
    eval_range.end = eval_range.begin + options.eval_rows;
  }
  double running = 0;
  std::size_t running_batches = 0;
  std::size_t samples = 0;
  auto record = [&](RowRange validation) {
    TracePoint p;
    p.step = steps_;
    p.samples = samples;
    p.train_loss = running_batches ? running / static_cast<double>(running_batches) : 0.0;
    p.validation_loss = validation.size() ? model_.evaluate(split.data, validation).loss : 0.0;
    trace.push_back(p);
    running = 0;
    running_batches = 0;
  };
  std::size_t batches = 0;
  for (std::size_t begin = split.train.begin; begin < split.train.end; begin += options.batch_size) {
    const std::size_t end = std::min(begin + options.batch_size, split.train.end);
    running += train_batch(split.data, RowRange{begin, end});
    ++running_batches;
    samples += end - begin;
    ++batches;
    if (options.eval_every > 0 && batches % options.eval_every == 0 && end < split.train.end) record(eval_range);
  }
  record(split.validation);
  return trace;
}

}  // namespace compemb
