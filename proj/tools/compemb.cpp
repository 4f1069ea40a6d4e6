// compemb: train, verify, params, gradcheck and bench from the command line.

#include <iostream>
#include <limits>
#include <sstream>

#include "CLI11.hpp"
#include "compemb/run.hpp"

using namespace compemb;

namespace {

Index parse_index(const std::string& text) {
  if (text == "inf") return std::numeric_limits<Index>::max();
  std::size_t used = 0;
  const auto v = std::stoull(text, &used);
  if (used != text.size()) throw std::invalid_argument("not an integer: '" + text + "'");
  return v;
}

std::vector<Index> parse_indices(const std::vector<std::string>& items) {
  std::vector<Index> out;
  for (const auto& item : items) out.push_back(parse_index(item));
  return out;
}

// "0;1,3,4;2" -> {{0}, {1, 3, 4}, {2}}
std::vector<std::vector<Index>> parse_blocks(const std::string& text) {
  std::vector<std::vector<Index>> blocks;
  std::stringstream outer(text);
  std::string block;
  while (std::getline(outer, block, ';')) {
    std::vector<Index> members;
    std::stringstream inner(block);
    std::string item;
    while (std::getline(inner, item, ',')) members.push_back(parse_index(item));
    blocks.push_back(std::move(members));
  }
  return blocks;
}

EmbeddingScheme scheme_for_op(const std::string& op) {
  switch (composition_op_from_string(op)) {
    case CompositionOp::concat: return EmbeddingScheme::comp_concat;
    case CompositionOp::add: return EmbeddingScheme::comp_add;
    case CompositionOp::mult: return EmbeddingScheme::comp_mult;
    case CompositionOp::feature_generation: return EmbeddingScheme::feature_gen;
  }
  throw std::invalid_argument("bad op");
}

struct ModelFlags {
  std::string scheme, op, arch;
  std::size_t dim = 0, divisor = 0;

  void add(CLI::App* app) {
    app->add_option("--scheme", scheme, "full, hash, qr, comp_concat, comp_add, comp_mult, feature_gen, path");
    app->add_option("--op", op, "compositional operation")->check(CLI::IsMember({"concat", "add", "mult", "feature"}));
    app->add_option("--arch", arch, "model architecture")->check(CLI::IsMember({"dcn", "dlrm"}));
    app->add_option("--dim", dim, "embedding dimension");
    app->add_option("--divisor", divisor, "hidden-width divisor (1 = published widths)");
  }
  void apply(ModelConfig& m) const {
    if (!scheme.empty()) m.scheme = embedding_scheme_from_string(scheme);
    if (!op.empty()) m.scheme = scheme_for_op(op);
    if (!arch.empty()) m.architecture = architecture_from_string(arch);
    if (dim) m.embedding_dim = dim;
    if (divisor) m.width_divisor = divisor;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Compositional embeddings over complementary partitions"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "train models and write metrics");
  std::string config_path, out_dir, optimizer, criteo, cache, synthetic;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> trials, limit, rows, batch_size;
  std::vector<std::string> collisions, thresholds;
  bool deterministic = false;
  ModelFlags train_model;
  train->add_option("--config", config_path, "JSON run config; flags override it")->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "base seed (trial t uses seed + t)");
  train->add_option("--trials", trials, "trials per configuration");
  train_model.add(train);
  train->add_option("--collisions", collisions, "hash collisions per row; several values sweep")->expected(1, -1);
  train->add_option("--threshold", thresholds, "full tables up to this cardinality; several values sweep")
      ->expected(1, -1);
  train->add_option("--optimizer", optimizer)->check(CLI::IsMember({"adagrad", "amsgrad", "sgd"}));
  train->add_flag("--deterministic", deterministic, "run trials one after another");
  train->add_option("--out", out_dir, "output directory");
  train->add_option("--criteo", criteo, "Criteo TSV file (plain or gzip)");
  train->add_option("--cache", cache, "cached binary dataset");
  train->add_option("--synthetic", synthetic, "synthetic preset")->check(CLI::IsMember({"quick", "default"}));
  train->add_option("--limit", limit, "read at most this many rows");
  train->add_option("--rows", rows, "synthetic row count");
  train->add_option("--batch-size", batch_size);

  // verify
  auto* verify = app.add_subcommand("verify", "check that a family of partitions is complementary");
  std::string kind = "qr";
  Index size = 0;
  std::vector<Index> moduli;
  std::vector<std::string> partition_blocks;
  VerifyOptions verify_options;
  bool sampled = false;
  verify->add_option("--kind", kind, "naive, qr, generalized_qr, crt, hash, explicit");
  verify->add_option("--size", size, "category count |S|");
  verify->add_option("--moduli", moduli, "moduli (qr and hash take one)")->expected(1, -1);
  verify->add_option("--partition", partition_blocks, "explicit partition as blocks, e.g. \"0;1,3,4;2\"; repeat")
      ->expected(1, -1);
  verify->add_option("--cap", verify_options.exhaustive_cap, "largest |S| checked over all pairs");
  verify->add_flag("--sampled", sampled, "sample pairs above the cap instead of failing");
  verify->add_option("--pairs", verify_options.sampled_pairs, "pairs to sample");
  verify->add_option("--seed", verify_options.seed);

  // params
  auto* params = app.add_subcommand("params", "count stored parameters per feature");
  std::string params_config;
  std::vector<Index> cardinalities;
  std::vector<std::string> params_collisions, params_thresholds;
  std::string params_synthetic;
  bool per_feature = false;
  ModelFlags params_model;
  params->add_option("--config", params_config, "JSON run config")->check(CLI::ExistingFile);
  params_model.add(params);
  params->add_option("--cardinalities", cardinalities, "per-feature cardinalities (default: Criteo Kaggle)")
      ->expected(1, -1);
  params->add_option("--synthetic", params_synthetic, "use a synthetic preset's cardinalities")
      ->check(CLI::IsMember({"quick", "default"}));
  params->add_option("--collisions", params_collisions)->expected(1, -1);
  params->add_option("--threshold", params_thresholds)->expected(1, -1);
  params->add_flag("--per-feature", per_feature, "print one row per feature");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "compare backward passes with finite differences");
  GradcheckOptions grad_options;
  std::size_t grad_seeds = 1;
  gradcheck->add_option("--seed", grad_options.seed);
  gradcheck->add_option("--seeds", grad_seeds, "run this many consecutive seeds");
  gradcheck->add_option("--tolerance", grad_options.tolerance);
  gradcheck->add_flag("--inject-sign-flip", grad_options.inject_sign_flip, "negate analytic gradients");

  // bench
  auto* bench = app.add_subcommand("bench", "time embedding lookups");
  std::string bench_scheme = "full";
  Index bench_size = 1'000'000, bench_modulus = 1000;
  std::size_t bench_dim = 16;
  std::uint64_t iterations = 1'000'000, bench_seed = 0;
  bench->add_option("--scheme", bench_scheme)->check(CLI::IsMember({"full", "hash", "qr"}));
  bench->add_option("--size", bench_size);
  bench->add_option("--dim", bench_dim);
  bench->add_option("--modulus", bench_modulus);
  bench->add_option("--iterations", iterations);
  bench->add_option("--seed", bench_seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      RunConfig config = config_path.empty() ? RunConfig{} : load_run_config(config_path);
      if (seed) config.seed = *seed;
      if (trials) config.trials = *trials;
      train_model.apply(config.model);
      if (!collisions.empty()) config.collisions = parse_indices(collisions);
      if (!thresholds.empty()) config.thresholds = parse_indices(thresholds);
      if (config.collisions.size() == 1) config.model.collisions = config.collisions[0], config.collisions.clear();
      if (config.thresholds.size() == 1) config.model.threshold = config.thresholds[0], config.thresholds.clear();
      if (!optimizer.empty()) config.optimizer = optimizer_kind_from_string(optimizer);
      if (deterministic) config.deterministic = true;
      if (!out_dir.empty()) config.out_dir = out_dir;
      if (!criteo.empty()) {
        config.data.kind = DataSource::Kind::criteo;
        config.data.path = criteo;
      }
      if (!cache.empty()) {
        config.data.kind = DataSource::Kind::cache;
        config.data.path = cache;
      }
      if (!synthetic.empty()) {
        config.data.kind = DataSource::Kind::synthetic;
        config.data.synthetic = synthetic == "quick" ? SyntheticSpec::quick() : SyntheticSpec{};
      }
      if (rows) config.data.synthetic.rows = *rows;
      if (limit) config.data.limit = *limit;
      if (batch_size) config.train.batch_size = *batch_size;
      if (config.trials == 0) throw std::invalid_argument("--trials must be >= 1");

      const auto points = run_train(config, &std::cerr);
      for (const auto& p : points) {
        const auto& s = p.summary;
        std::cout << to_string(config.model.scheme) << " c=" << p.collisions << " tau=" << p.threshold
                  << ": params " << s["params"].get<std::size_t>() << ", test loss "
                  << s["test_loss_mean"].get<double>() << " +- " << s["test_loss_std"].get<double>() << " ("
                  << p.directory << ")\n";
      }
      return 0;
    }

    if (*verify) {
      if (verify->count("--kind") == 0 && !partition_blocks.empty()) kind = "explicit";
      const auto k = partition_kind_from_string(kind);
      auto first_modulus = [&] {
        if (moduli.size() != 1) throw std::invalid_argument("--kind " + kind + " takes exactly one --moduli value");
        return moduli[0];
      };
      std::optional<PartitionSet> ps;
      switch (k) {
        case PartitionKind::naive: ps = PartitionSet::naive(size); break;
        case PartitionKind::quotient_remainder: ps = PartitionSet::quotient_remainder(size, first_modulus()); break;
        case PartitionKind::generalized_qr: ps = PartitionSet::generalized_qr(size, moduli); break;
        case PartitionKind::crt: ps = PartitionSet::crt(size, moduli); break;
        case PartitionKind::hashing: ps = PartitionSet::hashing(size, first_modulus()); break;
        case PartitionKind::explicit_classes: {
          if (partition_blocks.empty()) throw std::invalid_argument("--kind explicit needs --partition");
          std::vector<std::vector<std::vector<Index>>> parts;
          for (const auto& text : partition_blocks) parts.push_back(parse_blocks(text));
          if (size == 0) {
            for (const auto& b : parts.front()) size += b.size();
          }
          ps = PartitionSet::from_blocks(size, parts);
          break;
        }
      }
      const auto result = run_verify(*ps, verify_options, sampled);
      print_verify(std::cout, *ps, result);
      return result.passed() ? 0 : 1;
    }

    if (*params) {
      RunConfig config = params_config.empty() ? RunConfig{} : load_run_config(params_config);
      params_model.apply(config.model);
      std::vector<Index> cards = criteo_kaggle_cardinalities();
      if (!params_synthetic.empty()) {
        cards = (params_synthetic == "quick" ? SyntheticSpec::quick() : SyntheticSpec{}).cardinalities;
        config.model.num_dense = kCriteoDense;
      } else if (!cardinalities.empty()) {
        cards = cardinalities;
      }
      auto cs = params_collisions.empty() ? std::vector<Index>{config.model.collisions} : parse_indices(params_collisions);
      auto ts = params_thresholds.empty() ? std::vector<Index>{config.model.threshold} : parse_indices(params_thresholds);
      for (Index c : cs) {
        for (Index t : ts) {
          ModelConfig m = config.model;
          m.collisions = c;
          m.threshold = t;
          print_params(std::cout, count_params(m, cards), per_feature);
        }
      }
      return 0;
    }

    if (*gradcheck) {
      bool all = true;
      const auto first_seed = grad_options.seed;
      for (std::size_t s = 0; s < grad_seeds; ++s) {
        grad_options.seed = first_seed + s;
        for (const auto& r : run_gradchecks(grad_options)) {
          std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " seed=" << grad_options.seed
                    << " rel_err=" << r.max_relative_error << '\n';
          all = all && r.passed;
        }
      }
      return all ? 0 : 1;
    }

    if (*bench) {
      const auto r = run_bench(bench_scheme, bench_size, bench_dim, bench_modulus, iterations, bench_seed);
      std::cout << "scheme " << r.scheme << ", |S| " << r.domain_size << ", D " << r.dim << ", iterations "
                << r.iterations << '\n'
                << "params " << r.params << ", resident bytes " << r.resident_bytes << '\n'
                << "seconds " << r.seconds << ", lookups/s " << r.lookups_per_second << ", checksum " << r.checksum
                << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
