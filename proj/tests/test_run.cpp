#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "compemb/run.hpp"
#include "doctest.h"

using namespace compemb;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

RunConfig quick_config(const fs::path& out) {
  RunConfig c;
  c.trials = 2;
  c.deterministic = true;
  c.out_dir = out.string();
  c.data.synthetic = SyntheticSpec::quick();
  c.data.synthetic.rows = 2800;
  c.model.scheme = EmbeddingScheme::qr_mult;
  c.train = {128, 5, 0};
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("compemb_test_" + name);
  fs::remove_all(p);
  return p;
}

int run_cli(const char* cli, const std::string& args) {
  const int status = std::system((std::string(cli) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("run config survives a JSON round trip") {
  RunConfig c;
  c.seed = 17;
  c.trials = 3;
  c.optimizer = OptimizerKind::amsgrad;
  c.collisions = {2, 60};
  c.thresholds = {1, 20000};
  c.model.architecture = Architecture::dcn;
  c.model.scheme = EmbeddingScheme::path;
  c.model.path_hidden = {32};
  c.model.embedding_init = EmbeddingInit::dim;
  c.data.limit = 1000;
  c.data.synthetic.zipf = 0.5;
  const auto j = to_json(c);
  CHECK(j.at("schema_version") == kSchemaVersion);
  const auto back = run_config_from_json(j);
  CHECK(to_json(back) == j);

  CHECK_THROWS(run_config_from_json(nlohmann::json{{"schema_version", 99}}));
  CHECK_THROWS(run_config_from_json(nlohmann::json{{"model", {{"scheme", "bogus"}}}}));
  CHECK(run_config_from_json(nlohmann::json{{"data", {{"synthetic", {{"preset", "quick"}}}}}})
            .data.synthetic.rows == SyntheticSpec::quick().rows);
}

TEST_CASE("partition sets survive a JSON round trip") {
  for (const auto& ps : {PartitionSet::quotient_remainder(10, 3), PartitionSet::crt(35, {5, 7}),
                         PartitionSet::generalized_qr(12, {2, 3, 2}), PartitionSet::hashing(10, 4),
                         PartitionSet::naive(4), PartitionSet::explicit_classes(3, {{0, 1, 1}, {1, 0, 0}})}) {
    CHECK(partition_set_from_json(to_json(ps)) == ps);
  }
}

TEST_CASE("training writes a summary with the documented fields") {
  const auto out = fresh_dir("train");
  const auto points = run_train(quick_config(out));
  REQUIRE(points.size() == 1);
  const auto summary = nlohmann::json::parse(slurp(out / "summary.json"));
  CHECK(summary == points[0].summary);
  for (const char* key : {"schema_version", "test_loss_mean", "test_loss_std", "params", "embedding_params",
                          "validation_loss_mean", "test_accuracy_mean", "results", "bayes_test_loss_mean"}) {
    CHECK_MESSAGE(summary.contains(key), key);
  }
  CHECK(summary.at("results").size() == 2);
  CHECK(summary.at("test_loss_std").get<double>() >= 0.0);
  CHECK(summary.at("test_loss_mean").get<double>() > summary.at("bayes_test_loss_mean").get<double>());
  CHECK(slurp(out / "metrics.csv").rfind("trial,step,samples,train_loss,validation_loss\n", 0) == 0);
  CHECK(slurp(out / "curves.csv").rfind("step,samples,train_loss_mean,train_loss_std", 0) == 0);
  const auto persisted = load_run_config((out / "run_config.json").string());
  CHECK(to_json(persisted) == to_json(quick_config(out)));
  fs::remove_all(out);
}

TEST_CASE("deterministic runs give byte-identical CSVs") {
  const auto a = fresh_dir("det_a");
  const auto b = fresh_dir("det_b");
  run_train(quick_config(a));
  run_train(quick_config(b));
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
  CHECK(slurp(a / "curves.csv") == slurp(b / "curves.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("concurrent trials match deterministic ones") {
  const auto a = fresh_dir("par_a");
  const auto b = fresh_dir("par_b");
  auto cfg = quick_config(a);
  run_train(cfg);
  cfg.out_dir = b.string();
  cfg.deterministic = false;
  run_train(cfg);
  CHECK(slurp(a / "metrics.csv") == slurp(b / "metrics.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("a collision sweep writes one summary per point") {
  const auto out = fresh_dir("sweep");
  auto cfg = quick_config(out);
  cfg.trials = 1;
  cfg.data.synthetic.rows = 700;
  cfg.collisions = {2, 3, 4, 5, 6, 7, 60};
  const auto points = run_train(cfg);
  REQUIRE(points.size() == 7);
  for (std::size_t k = 0; k < points.size(); ++k) {
    const auto& p = points[k];
    CHECK(fs::exists(fs::path(p.directory) / "summary.json"));
    CHECK(p.collisions == cfg.collisions[k]);
    CHECK(p.summary.at("collisions") == p.collisions);
  }
  CHECK(fs::exists(out / "sweep.csv"));
  fs::remove_all(out);
}

TEST_CASE("mean and sample standard deviation") {
  const auto one = mean_std({2.0});
  CHECK(one.mean == 2.0);
  CHECK(one.std == 0.0);
  const auto two = mean_std({1.0, 3.0});
  CHECK(two.mean == 2.0);
  CHECK(two.std == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("missing datasets give an actionable error") {
  DataSource s;
  s.kind = DataSource::Kind::criteo;
  s.path = "/nonexistent/train.txt";
  CHECK_THROWS_WITH(load_data(s), doctest::Contains("--synthetic"));
}

TEST_CASE("verify command") {
  const auto ok = run_verify(PartitionSet::crt(35, {5, 7}), {}, false);
  CHECK(ok.passed());
  CHECK(ok.tuple_check_run);
  const auto bad = run_verify(PartitionSet::hashing(10, 3), {}, false);
  CHECK_FALSE(bad.passed());
  std::ostringstream text;
  print_verify(text, PartitionSet::hashing(10, 3), bad);
  CHECK(text.str().find("NOT complementary") != std::string::npos);
  CHECK(text.str().find("witness: 0 and 3") != std::string::npos);

  VerifyOptions capped;
  capped.exhaustive_cap = 100;
  CHECK_THROWS(run_verify(PartitionSet::quotient_remainder(1000, 10), capped, false));
  capped.sampled_pairs = 1000;
  const auto sampled = run_verify(PartitionSet::quotient_remainder(1000, 10), capped, true);
  CHECK(sampled.passed());
  CHECK_FALSE(sampled.report.exhaustive);
}

TEST_CASE("params command") {
  const auto cards = criteo_kaggle_cardinalities();
  ModelConfig full;
  ModelConfig qr;
  qr.scheme = EmbeddingScheme::qr_mult;
  qr.collisions = 4;
  const double ratio = double(count_params(full, cards).embedding_params) / double(count_params(qr, cards).embedding_params);
  CHECK(ratio == doctest::Approx(4.0).epsilon(0.01));

  // Closed form for the quick synthetic cardinalities.
  ModelConfig syn = qr;
  const auto quick = SyntheticSpec::quick().cardinalities;
  std::size_t expected = 0;
  for (Index n : quick) {
    const Index m = (n + 3) / 4;
    expected += ((n + m - 1) / m + m) * 16;
  }
  CHECK(count_params(syn, quick).embedding_params == expected);

  std::ostringstream text;
  print_params(text, count_params(qr, cards), true);
  CHECK(text.str().find("total") != std::string::npos);
}

TEST_CASE("gradcheck command") {
  const auto results = run_gradchecks({});
  CHECK(results.size() == 16);
  for (const auto& r : results) CHECK_MESSAGE(r.passed, r.name);
  GradcheckOptions flipped;
  flipped.inject_sign_flip = true;
  for (const auto& r : run_gradchecks(flipped)) CHECK_FALSE(r.passed);
}

TEST_CASE("bench command") {
  const auto empty = run_bench("qr", 1000, 16, 100, 0, 1);
  CHECK(empty.iterations == 0);
  CHECK(empty.seconds == 0.0);
  const auto full = run_bench("full", 1'000'000, 16, 1000, 1000, 1);
  const auto qr = run_bench("qr", 1'000'000, 16, 1000, 1000, 1);
  CHECK(full.resident_bytes == 64'000'000);
  CHECK(qr.resident_bytes == 128'000);
  CHECK(full.resident_bytes / qr.resident_bytes == 500);
  CHECK(qr.lookups_per_second > 0);
  CHECK_THROWS(run_bench("bogus", 10, 4, 2, 1, 1));
}

TEST_CASE("command-line exit codes") {
  const char* cli = std::getenv("COMPEMB_CLI");
  if (cli == nullptr) {
    MESSAGE("COMPEMB_CLI not set; skipping");
    return;
  }
  CHECK(run_cli(cli, "verify --kind crt --size 35 --moduli 5 7") == 0);
  CHECK(run_cli(cli, "verify --size 5 --partition \"0;1,3,4;2\" --partition \"0,1,3;2,4\" --partition \"0,3;1,2,4\"") == 0);
  CHECK(run_cli(cli, "verify --kind hash --size 10 --moduli 3") == 1);
  CHECK(run_cli(cli, "verify --kind qr --size 100000 --moduli 300") == 2);
  CHECK(run_cli(cli, "verify --kind crt --size 20 --moduli 4 6") == 2);
  CHECK(run_cli(cli, "bench --scheme qr --size 1000 --iterations 0") == 0);
  CHECK(run_cli(cli, "gradcheck --inject-sign-flip") == 1);
  CHECK(run_cli(cli, "train --criteo /nonexistent/train.txt --trials 1") == 2);
}
