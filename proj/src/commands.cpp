#include <algorithm>
#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <random>
#include <stdexcept>
#include <thread>

#include "compemb/run.hpp"

namespace compemb {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::size_t mlp_params(const std::vector<std::size_t>& dims) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) n += dims[l + 1] * dims[l] + dims[l + 1];
  return n;
}

std::vector<std::size_t> scaled_dims(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t divisor) {
  std::vector<std::size_t> dims{in};
  for (auto h : hidden) dims.push_back(std::max<std::size_t>(1, (h + divisor - 1) / divisor));
  return dims;
}

// Runs fn(0..count-1), on worker threads unless `serial`.
template <typename Fn>
void for_each_index(std::size_t count, bool serial, Fn fn) {
  const std::size_t workers =
      serial ? 1 : std::min<std::size_t>(count, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < count;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::string metrics_csv(const std::vector<TrialResult>& trials) {
  std::string s = "trial,step,samples,train_loss,validation_loss\n";
  for (const auto& t : trials) {
    for (const auto& p : t.trace) {
      s += std::to_string(t.trial) + ',' + std::to_string(p.step) + ',' + std::to_string(p.samples) + ',' +
           fmt(p.train_loss) + ',' + fmt(p.validation_loss) + '\n';
    }
  }
  return s;
}

std::string curves_csv(const std::vector<TrialResult>& trials) {
  std::string s = "step,samples,train_loss_mean,train_loss_std,validation_loss_mean,validation_loss_std\n";
  std::size_t points = trials.front().trace.size();
  for (const auto& t : trials) points = std::min(points, t.trace.size());
  for (std::size_t k = 0; k < points; ++k) {
    std::vector<double> train, val;
    for (const auto& t : trials) {
      train.push_back(t.trace[k].train_loss);
      val.push_back(t.trace[k].validation_loss);
    }
    const auto a = mean_std(train);
    const auto b = mean_std(val);
    const auto& p = trials.front().trace[k];
    s += std::to_string(p.step) + ',' + std::to_string(p.samples) + ',' + fmt(a.mean) + ',' + fmt(a.std) + ',' +
         fmt(b.mean) + ',' + fmt(b.std) + '\n';
  }
  return s;
}

json summarize(const RunConfig& config, const SweepPointResult& point, const std::vector<const DatasetSplit*>& data) {
  std::vector<double> val, test, acc;
  json per_trial = json::array();
  for (const auto& t : point.trials) {
    val.push_back(t.validation.loss);
    test.push_back(t.test.loss);
    acc.push_back(t.test.accuracy);
    per_trial.push_back({{"trial", t.trial},
                         {"seed", t.seed},
                         {"steps", t.trace.empty() ? 0 : t.trace.back().step},
                         {"validation_loss", t.validation.loss},
                         {"test_loss", t.test.loss},
                         {"test_accuracy", t.test.accuracy}});
  }
  const auto v = mean_std(val);
  const auto te = mean_std(test);
  const auto a = mean_std(acc);
  const auto& first = point.trials.front();
  json s = {
      {"schema_version", kSchemaVersion},
      {"architecture", to_string(config.model.architecture)},
      {"scheme", to_string(config.model.scheme)},
      {"optimizer", to_string(config.optimizer)},
      {"collisions", point.collisions},
      {"threshold", point.threshold},
      {"trials", point.trials.size()},
      {"params", first.params},
      {"embedding_params", first.embedding_params},
      {"dense_params", first.params - first.embedding_params},
      {"validation_loss_mean", v.mean},
      {"validation_loss_std", v.std},
      {"test_loss_mean", te.mean},
      {"test_loss_std", te.std},
      {"test_accuracy_mean", a.mean},
      {"test_accuracy_std", a.std},
      {"results", per_trial},
  };
  if (!data.empty() && !data.front()->true_probabilities.empty()) {
    std::vector<double> bayes;
    for (const auto* d : data) bayes.push_back(bayes_loss(*d, d->test));
    s["bayes_test_loss_mean"] = mean_std(bayes).mean;
  }
  return s;
}

}  // namespace

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  if (values.empty()) return r;
  double sum = 0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - r.mean) * (v - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return r;
}

TrialResult train_trial(const RunConfig& config, const DatasetSplit& split, std::size_t trial) {
  ModelConfig mc = config.model;
  mc.num_dense = split.data.num_dense;
  TrialResult r;
  r.trial = trial;
  r.seed = config.seed + trial;
  Model model(mc, split.cardinalities, r.seed);
  r.params = model.param_count();
  r.embedding_params = model.embedding_param_count();
  Trainer trainer(model, OptimizerConfig::defaults(config.optimizer));
  r.trace = trainer.train_epoch(split, config.train);
  r.validation = model.evaluate(split.data, split.validation);
  r.test = model.evaluate(split.data, split.test);
  return r;
}

std::vector<SweepPointResult> run_train(const RunConfig& config, std::ostream* log) {
  if (config.trials == 0) throw std::invalid_argument("trials must be >= 1");
  const auto collisions = config.collisions.empty() ? std::vector<Index>{config.model.collisions} : config.collisions;
  const auto thresholds = config.thresholds.empty() ? std::vector<Index>{config.model.threshold} : config.thresholds;
  const bool sweeping = collisions.size() * thresholds.size() > 1;

  // Synthetic trials draw their own dataset; file sources are shared.
  const bool per_trial_data = config.data.kind == DataSource::Kind::synthetic;
  std::vector<DatasetSplit> datasets(per_trial_data ? config.trials : 1);
  for_each_index(datasets.size(), config.deterministic, [&](std::size_t t) { datasets[t] = load_data(config.data, t); });
  std::vector<const DatasetSplit*> data_for_trial;
  for (std::size_t t = 0; t < config.trials; ++t) data_for_trial.push_back(&datasets[per_trial_data ? t : 0]);
  if (log && datasets.front().skipped_lines > 0) {
    *log << "skipped " << datasets.front().skipped_lines << " malformed lines\n";
  }

  const fs::path root(config.out_dir);
  fs::create_directories(root);
  std::mutex log_mutex;
  std::vector<SweepPointResult> points;
  for (Index c : collisions) {
    for (Index tau : thresholds) {
      RunConfig point_config = config;
      point_config.model.collisions = c;
      point_config.model.threshold = tau;
      point_config.collisions.clear();
      point_config.thresholds.clear();
      point_config.model.validate();

      SweepPointResult point;
      point.collisions = c;
      point.threshold = tau;
      const fs::path dir = sweeping ? root / ("c" + std::to_string(c) + "_t" + std::to_string(tau)) : root;
      fs::create_directories(dir);
      point.directory = dir.string();
      point.trials.resize(config.trials);
      for_each_index(config.trials, config.deterministic, [&](std::size_t t) {
        point.trials[t] = train_trial(point_config, *data_for_trial[t], t);
        if (log) {
          std::lock_guard lock(log_mutex);
          *log << to_string(config.model.scheme) << " c=" << c << " tau=" << tau << " trial " << t
               << ": test loss " << fmt(point.trials[t].test.loss) << ", accuracy "
               << fmt(point.trials[t].test.accuracy) << '\n';
        }
      });

      point.summary = summarize(point_config, point, data_for_trial);
      write_text(dir / "metrics.csv", metrics_csv(point.trials));
      write_text(dir / "curves.csv", curves_csv(point.trials));
      write_text(dir / "summary.json", point.summary.dump(2) + "\n");
      write_text(dir / "run_config.json", to_json(point_config).dump(2) + "\n");
      points.push_back(std::move(point));
    }
  }

  if (sweeping) {
    std::string s = "collisions,threshold,params,embedding_params,test_loss_mean,test_loss_std\n";
    for (const auto& p : points) {
      s += std::to_string(p.collisions) + ',' + std::to_string(p.threshold) + ',' +
           std::to_string(p.summary["params"].get<std::size_t>()) + ',' +
           std::to_string(p.summary["embedding_params"].get<std::size_t>()) + ',' +
           fmt(p.summary["test_loss_mean"].get<double>()) + ',' + fmt(p.summary["test_loss_std"].get<double>()) + '\n';
    }
    write_text(root / "sweep.csv", s);
    write_text(root / "run_config.json", to_json(config).dump(2) + "\n");
  }
  return points;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

VerifyCommandResult run_verify(const PartitionSet& partitions, const VerifyOptions& options, bool allow_sampled) {
  if (partitions.domain_size() > options.exhaustive_cap && !allow_sampled) {
    throw std::invalid_argument("domain size " + std::to_string(partitions.domain_size()) +
                                " exceeds the exhaustive cap " + std::to_string(options.exhaustive_cap) +
                                "; pass --sampled to check random pairs instead");
  }
  VerifyCommandResult r;
  r.report = verify_complementary(partitions, options);
  if (r.report.exhaustive) {
    r.tuple_collision = find_tuple_collision(partitions);
    r.tuple_check_run = true;
  }
  return r;
}

void print_verify(std::ostream& out, const PartitionSet& ps, const VerifyCommandResult& r) {
  out << "partitions: " << to_string(ps.kind()) << ", |S| = " << ps.domain_size() << ", k = " << ps.count()
      << ", sizes =";
  for (auto s : ps.sizes()) out << ' ' << s;
  out << '\n';
  out << "pairs checked: " << r.report.pairs_checked << (r.report.exhaustive ? " (all pairs)" : " (sampled)") << '\n';
  if (r.report.witness) {
    const auto [a, b] = *r.report.witness;
    out << "witness: " << a << " and " << b << " share classes (";
    const auto tuple = ps.class_tuple(a);
    for (std::size_t j = 0; j < tuple.size(); ++j) out << (j ? ", " : "") << tuple[j];
    out << ")\n";
  }
  if (r.tuple_check_run) {
    out << "tuple check: " << (r.tuple_collision ? "collision" : "injective") << '\n';
  }
  if (r.report.complementary && !r.report.exhaustive) {
    out << "result: no collision among sampled pairs (not a proof)\n";
  } else {
    out << "result: " << (r.passed() ? "complementary" : "NOT complementary") << '\n';
  }
}

// ---------------------------------------------------------------------------
// params
// ---------------------------------------------------------------------------

std::size_t dense_param_count(const ModelConfig& config, std::span<const Index> cardinalities) {
  const auto plans = apply_threshold(config, cardinalities);
  std::size_t width = 0;
  for (const auto& p : plans) width += p.vector_dim * p.vector_count;
  const std::size_t div = config.width_divisor;
  if (config.architecture == Architecture::dlrm) {
    const std::size_t vd = config.scheme == EmbeddingScheme::comp_concat ? config.concat_dim : config.embedding_dim;
    std::size_t n = 0;
    if (config.num_dense > 0) {
      auto dims = scaled_dims(config.num_dense, config.bottom_mlp, div);
      dims.push_back(vd);
      n += mlp_params(dims);
    }
    const std::size_t vectors = (config.num_dense > 0 ? 1 : 0) + width / vd;
    auto top = scaled_dims((config.num_dense > 0 ? vd : 0) + nn::interaction_count(vectors), config.top_mlp, div);
    top.push_back(1);
    return n + mlp_params(top);
  }
  const std::size_t x0 = config.num_dense + width;
  const auto deep = scaled_dims(x0, config.deep_mlp, div);
  return mlp_params(deep) + 2 * x0 * config.cross_depth + mlp_params({deep.back() + x0, 1});
}

ParamsReport count_params(const ModelConfig& config, std::span<const Index> cardinalities) {
  config.validate();
  ParamsReport r;
  r.threshold = config.threshold;
  r.collisions = config.collisions;
  const auto plans = apply_threshold(config, cardinalities);
  for (std::size_t f = 0; f < plans.size(); ++f) {
    FeatureParams fp{f, plans[f], planned_feature_params(config, plans[f])};
    r.embedding_params += fp.params;
    r.features.push_back(fp);
  }
  r.dense_params = dense_param_count(config, cardinalities);
  return r;
}

void print_params(std::ostream& out, const ParamsReport& r, bool per_feature) {
  if (per_feature) {
    out << "feature,cardinality,scheme,modulus,params\n";
    for (const auto& f : r.features) {
      out << f.feature << ',' << f.plan.cardinality << ',' << to_string(f.plan.scheme) << ',' << f.plan.modulus << ','
          << f.params << '\n';
    }
  }
  out << "threshold " << r.threshold << ", collisions " << r.collisions << ": embedding " << r.embedding_params
      << ", dense " << r.dense_params << ", total " << r.total() << '\n';
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

BenchReport run_bench(const std::string& scheme, Index n, std::size_t dim, Index modulus, std::uint64_t iterations,
                      std::uint64_t seed) {
  if (n == 0 || dim == 0) throw std::invalid_argument("bench needs n and dim >= 1");
  if (iterations == 0) return BenchReport{scheme, n, dim};
  std::mt19937_64 rng(seed);
  std::vector<EmbeddingTable<float>> tables;
  if (scheme == "full") {
    tables.push_back(EmbeddingTable<float>::uniform(n, dim, rng));
  } else if (scheme == "hash") {
    if (modulus == 0) throw std::invalid_argument("hash bench needs a modulus");
    tables.push_back(EmbeddingTable<float>::uniform(modulus, dim, rng));
  } else if (scheme == "qr") {
    if (modulus == 0) throw std::invalid_argument("qr bench needs a modulus");
    tables.push_back(EmbeddingTable<float>::uniform(modulus, dim, rng));
    tables.push_back(EmbeddingTable<float>::uniform((n + modulus - 1) / modulus, dim, rng));
  } else {
    throw std::invalid_argument("unknown bench scheme '" + scheme + "' (full, hash, qr)");
  }

  std::vector<Index> ids(std::min<std::uint64_t>(iterations, 1u << 20));
  std::uniform_int_distribution<Index> pick(0, n - 1);
  for (auto& i : ids) i = pick(rng);

  BenchReport r;
  r.scheme = scheme;
  r.domain_size = n;
  r.dim = dim;
  r.iterations = iterations;
  for (const auto& t : tables) r.params += t.param_count();
  r.resident_bytes = r.params * sizeof(float);

  double checksum = 0;
  const auto start = std::chrono::steady_clock::now();
  for (std::uint64_t it = 0; it < iterations; ++it) {
    const Index i = ids[it % ids.size()];
    std::vector<float> v;
    if (scheme == "full") {
      v = full_lookup(tables[0], i);
    } else if (scheme == "hash") {
      v = hash_lookup(tables[0], i, modulus);
    } else {
      v = qr_lookup(tables[0], tables[1], i, modulus);
    }
    checksum += v[it % dim];
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  r.lookups_per_second = r.seconds > 0 ? static_cast<double>(iterations) / r.seconds : 0;
  r.checksum = checksum;
  return r;
}

}  // namespace compemb
