#include <fstream>
#include <stdexcept>

#include "compemb/run.hpp"

namespace compemb {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

std::string_view to_string(DataSource::Kind kind) {
  switch (kind) {
    case DataSource::Kind::synthetic: return "synthetic";
    case DataSource::Kind::criteo: return "criteo";
    case DataSource::Kind::cache: return "cache";
  }
  return "?";
}

DataSource::Kind data_kind_from_string(std::string_view name) {
  if (name == "synthetic") return DataSource::Kind::synthetic;
  if (name == "criteo") return DataSource::Kind::criteo;
  if (name == "cache") return DataSource::Kind::cache;
  throw std::invalid_argument("unknown data source '" + std::string(name) + "'");
}

}  // namespace

json to_json(const ModelConfig& c) {
  return {
      {"architecture", to_string(c.architecture)},
      {"embedding_dim", c.embedding_dim},
      {"scheme", to_string(c.scheme)},
      {"collisions", c.collisions},
      {"threshold", c.threshold},
      {"width_divisor", c.width_divisor},
      {"num_dense", c.num_dense},
      {"bottom_mlp", c.bottom_mlp},
      {"top_mlp", c.top_mlp},
      {"deep_mlp", c.deep_mlp},
      {"cross_depth", c.cross_depth},
      {"concat_dim", c.concat_dim},
      {"path_hidden", c.path_hidden},
      {"zero_init_output", c.zero_init_output},
      {"embedding_init", to_string(c.embedding_init)},
  };
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  if (auto it = j.find("architecture"); it != j.end()) c.architecture = architecture_from_string(it->get<std::string>());
  if (auto it = j.find("scheme"); it != j.end()) c.scheme = embedding_scheme_from_string(it->get<std::string>());
  read(j, "embedding_dim", c.embedding_dim);
  read(j, "collisions", c.collisions);
  read(j, "threshold", c.threshold);
  read(j, "width_divisor", c.width_divisor);
  read(j, "num_dense", c.num_dense);
  read(j, "bottom_mlp", c.bottom_mlp);
  read(j, "top_mlp", c.top_mlp);
  read(j, "deep_mlp", c.deep_mlp);
  read(j, "cross_depth", c.cross_depth);
  read(j, "concat_dim", c.concat_dim);
  read(j, "path_hidden", c.path_hidden);
  read(j, "zero_init_output", c.zero_init_output);
  if (auto it = j.find("embedding_init"); it != j.end()) {
    c.embedding_init = embedding_init_from_string(it->get<std::string>());
  }
  return c;
}

json to_json(const SyntheticSpec& s) {
  return {{"rows", s.rows},     {"cardinalities", s.cardinalities}, {"num_dense", s.num_dense},
          {"latent_dim", s.latent_dim}, {"signal", s.signal}, {"bias", s.bias},
          {"zipf", s.zipf},     {"seed", s.seed}};
}

SyntheticSpec synthetic_spec_from_json(const json& j, SyntheticSpec s) {
  if (auto it = j.find("preset"); it != j.end()) {
    const auto name = it->get<std::string>();
    if (name == "quick") {
      s = SyntheticSpec::quick();
    } else if (name == "default") {
      s = SyntheticSpec{};
    } else {
      throw std::invalid_argument("unknown synthetic preset '" + name + "'");
    }
  }
  read(j, "rows", s.rows);
  read(j, "cardinalities", s.cardinalities);
  read(j, "num_dense", s.num_dense);
  read(j, "latent_dim", s.latent_dim);
  read(j, "signal", s.signal);
  read(j, "bias", s.bias);
  read(j, "zipf", s.zipf);
  read(j, "seed", s.seed);
  return s;
}

json to_json(const RunConfig& c) {
  json data = {{"source", to_string(c.data.kind)}, {"path", c.data.path}, {"synthetic", to_json(c.data.synthetic)}};
  data["limit"] = c.data.limit ? json(*c.data.limit) : json(nullptr);
  return {
      {"schema_version", kSchemaVersion},
      {"command", c.command},
      {"seed", c.seed},
      {"trials", c.trials},
      {"deterministic", c.deterministic},
      {"optimizer", to_string(c.optimizer)},
      {"out", c.out_dir},
      {"data", data},
      {"model", to_json(c.model)},
      {"train", {{"batch_size", c.train.batch_size}, {"eval_every", c.train.eval_every}, {"eval_rows", c.train.eval_rows}}},
      {"sweep", {{"collisions", c.collisions}, {"thresholds", c.thresholds}}},
  };
}

RunConfig run_config_from_json(const json& j, RunConfig c) {
  if (auto it = j.find("schema_version"); it != j.end() && it->get<int>() != kSchemaVersion) {
    throw std::invalid_argument("unsupported config schema_version " + std::to_string(it->get<int>()));
  }
  read(j, "command", c.command);
  read(j, "seed", c.seed);
  read(j, "trials", c.trials);
  read(j, "deterministic", c.deterministic);
  read(j, "out", c.out_dir);
  if (auto it = j.find("optimizer"); it != j.end()) c.optimizer = optimizer_kind_from_string(it->get<std::string>());
  if (auto it = j.find("data"); it != j.end()) {
    const auto& d = *it;
    if (auto s = d.find("source"); s != d.end()) c.data.kind = data_kind_from_string(s->get<std::string>());
    read(d, "path", c.data.path);
    if (auto l = d.find("limit"); l != d.end()) {
      c.data.limit = l->is_null() ? std::nullopt : std::optional<std::size_t>(l->get<std::size_t>());
    }
    if (auto s = d.find("synthetic"); s != d.end()) c.data.synthetic = synthetic_spec_from_json(*s, c.data.synthetic);
  }
  if (auto it = j.find("model"); it != j.end()) c.model = model_config_from_json(*it, c.model);
  if (auto it = j.find("train"); it != j.end()) {
    read(*it, "batch_size", c.train.batch_size);
    read(*it, "eval_every", c.train.eval_every);
    read(*it, "eval_rows", c.train.eval_rows);
  }
  if (auto it = j.find("sweep"); it != j.end()) {
    read(*it, "collisions", c.collisions);
    read(*it, "thresholds", c.thresholds);
  }
  if (c.trials == 0) throw std::invalid_argument("trials must be >= 1");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::runtime_error("config '" + path + "': " + e.what());
  }
  return run_config_from_json(j);
}

json to_json(const PartitionSet& ps) {
  json j = {{"kind", to_string(ps.kind())}, {"domain_size", ps.domain_size()}, {"moduli", ps.moduli()}};
  if (ps.kind() == PartitionKind::explicit_classes) j["classes"] = ps.explicit_class_of();
  return j;
}

PartitionSet partition_set_from_json(const json& j) {
  const auto kind = partition_kind_from_string(j.at("kind").get<std::string>());
  const auto n = j.at("domain_size").get<Index>();
  std::vector<Index> moduli;
  read(j, "moduli", moduli);
  auto first = [&]() {
    if (moduli.empty()) throw std::invalid_argument("partition kind needs a modulus");
    return moduli.front();
  };
  switch (kind) {
    case PartitionKind::naive: return PartitionSet::naive(n);
    case PartitionKind::quotient_remainder: return PartitionSet::quotient_remainder(n, first());
    case PartitionKind::generalized_qr: return PartitionSet::generalized_qr(n, moduli);
    case PartitionKind::crt: return PartitionSet::crt(n, moduli);
    case PartitionKind::hashing: return PartitionSet::hashing(n, first());
    case PartitionKind::explicit_classes:
      return PartitionSet::explicit_classes(n, j.at("classes").get<std::vector<std::vector<Index>>>());
  }
  throw std::invalid_argument("bad partition kind");
}

DatasetSplit load_data(const DataSource& source, std::size_t trial) {
  switch (source.kind) {
    case DataSource::Kind::synthetic: {
      auto spec = source.synthetic;
      spec.seed += trial;
      if (source.limit) spec.rows = std::min(spec.rows, *source.limit);
      return synthetic_generate(spec);
    }
    case DataSource::Kind::criteo: {
      if (source.path.empty()) throw std::invalid_argument("criteo source needs a path (--criteo <file>)");
      std::ifstream probe(source.path);
      if (!probe) {
        throw std::runtime_error("dataset '" + source.path +
                                 "' not found; pass the Criteo train.txt (or .gz) path, or use --synthetic");
      }
      CriteoOptions opts;
      opts.limit = source.limit;
      return load_criteo_tsv(source.path, opts);
    }
    case DataSource::Kind::cache:
      return load_dataset_cache(source.path);
  }
  throw std::invalid_argument("bad data source");
}

}  // namespace compemb
