#include <zlib.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "compemb/data.hpp"
#include "compemb/nn.hpp"
#include "doctest.h"

using namespace compemb;
namespace fs = std::filesystem;

namespace {

// label, 13 ints, 26 tokens; `cat0` fills the first categorical field.
std::string criteo_line(int label, const std::string& cat0, int dense0 = 3) {
  std::string line = std::to_string(label);
  line += "\t" + std::to_string(dense0);
  for (int d = 1; d < 13; ++d) line += d % 4 == 0 ? "\t" : "\t" + std::to_string(d);
  line += "\t" + cat0;
  for (int c = 1; c < 26; ++c) line += c % 5 == 0 ? "\t" : "\t" + std::string("t") + std::to_string(c);
  return line;
}

fs::path temp_file(const std::string& name) { return fs::temp_directory_path() / ("compemb_test_" + name); }

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
}

void write_gzip(const fs::path& path, const std::vector<std::string>& lines) {
  gzFile f = gzopen(path.string().c_str(), "wb");
  REQUIRE(f != nullptr);
  for (const auto& l : lines) {
    const std::string s = l + "\n";
    gzwrite(f, s.data(), static_cast<unsigned>(s.size()));
  }
  gzclose(f);
}

std::vector<std::string> sample_lines(std::size_t n) {
  std::vector<std::string> lines;
  for (std::size_t r = 0; r < n; ++r) lines.push_back(criteo_line(int(r % 3 == 0), "c" + std::to_string(r % 11)));
  return lines;
}

}  // namespace

TEST_CASE("dense transform") {
  CHECK(transform_dense(0) == 0.0);
  CHECK(transform_dense(std::nullopt) == 0.0);
  CHECK(transform_dense(-5) == 0.0);
  CHECK(transform_dense(9) == doctest::Approx(std::log(10.0)));
  // log(1 + (e - 1)) = 1 on the real line; integer inputs bracket it.
  CHECK(transform_dense(1) == doctest::Approx(std::log(2.0)));
  CHECK(std::log1p(std::exp(1.0) - 1.0) == doctest::Approx(1.0));
}

TEST_CASE("categorical mapping reserves index 0") {
  Enumeration vocab;
  vocab.insert("68fd1e64");
  vocab.insert("80e26c9b");
  CHECK(map_categorical("", vocab) == 0);
  CHECK(map_categorical("68fd1e64", vocab) == 1);
  CHECK(map_categorical("80e26c9b", vocab) == 2);
  CHECK(map_categorical("deadbeef", vocab) == 0);
}

TEST_CASE("seventh split") {
  for (std::size_t n : {7, 8, 13, 1000, 45'840'617}) {
    const auto s = seventh_split(n);
    CHECK(s.train.begin == 0);
    CHECK(s.train.end == s.validation.begin);
    CHECK(s.validation.end == s.test.begin);
    CHECK(s.test.end == n);
    CHECK(s.validation.size() - s.test.size() <= 1);
  }
}

TEST_CASE("criteo TSV parsing") {
  const auto path = temp_file("criteo.txt");
  auto lines = sample_lines(70);
  lines[68] = criteo_line(1, "only_in_test", -7);
  write_lines(path, lines);
  const auto split = load_criteo_tsv(path.string());
  REQUIRE(split.data.size() == 70);
  CHECK(split.data.num_dense == 13);
  CHECK(split.data.num_categorical == 26);
  CHECK(split.train.size() == 60);
  CHECK(split.validation.size() == 5);
  CHECK(split.test.size() == 5);
  CHECK(split.data.label(0) == 1);
  CHECK(split.data.label(1) == 0);
  CHECK(split.data.dense_row(0)[0] == doctest::Approx(std::log(4.0)));
  CHECK(split.data.dense_row(0)[4] == 0.0f);  // empty field
  CHECK(split.data.categorical_row(0)[0] == 1);
  CHECK(split.data.categorical_row(0)[5] == 0);  // empty token
  CHECK(split.data.categorical_row(68)[0] == 0);  // unseen in training rows
  CHECK(split.data.dense_row(68)[0] == 0.0f);     // negative clamped
  CHECK(split.cardinalities[0] == 12);            // 11 tokens plus index 0
  CHECK(split.vocabularies[0].index_of("c0") == 0);
  for (std::size_t r = 0; r < split.data.size(); ++r) {
    for (std::size_t f = 0; f < 26; ++f) CHECK(split.data.categorical_row(r)[f] < split.cardinalities[f]);
  }
  fs::remove(path);
}

TEST_CASE("gzip input matches plain input") {
  const auto plain = temp_file("plain.txt");
  const auto gz = temp_file("packed.txt.gz");
  const auto lines = sample_lines(50);
  write_lines(plain, lines);
  write_gzip(gz, lines);
  const auto a = load_criteo_tsv(plain.string());
  const auto b = load_criteo_tsv(gz.string());
  CHECK(a.data == b.data);
  CHECK(a.vocabularies == b.vocabularies);
  fs::remove(plain);
  fs::remove(gz);
}

TEST_CASE("limit bounds records and vocabularies") {
  const auto path = temp_file("limit.txt");
  std::vector<std::string> lines;
  for (int r = 0; r < 1500; ++r) lines.push_back(criteo_line(r & 1, "u" + std::to_string(r)));
  write_lines(path, lines);
  CriteoOptions o;
  o.limit = 1000;
  const auto split = load_criteo_tsv(path.string(), o);
  CHECK(split.data.size() == 1000);
  for (const auto& v : split.vocabularies) CHECK(v.size() <= 1000);
  fs::remove(path);
}

TEST_CASE("malformed lines are skipped up to one percent") {
  const auto path = temp_file("malformed.txt");
  auto lines = sample_lines(200);
  lines[10] = "1\t2\t3";
  write_lines(path, lines);
  const auto ok = load_criteo_tsv(path.string());
  CHECK(ok.skipped_lines == 1);
  CHECK(ok.data.size() == 199);

  lines[20] = "x" + lines[20];
  lines[30] = "2" + lines[30].substr(1);
  write_lines(path, lines);
  CHECK_THROWS_WITH(load_criteo_tsv(path.string()), doctest::Contains("3 of 200 lines malformed"));
  fs::remove(path);

  CHECK_THROWS(load_criteo_tsv(temp_file("missing.txt").string()));
}

TEST_CASE("ingestion is idempotent") {
  const auto path = temp_file("twice.txt");
  write_lines(path, sample_lines(40));
  const auto a = load_criteo_tsv(path.string());
  const auto b = load_criteo_tsv(path.string());
  CHECK(a.data == b.data);
  CHECK(a.vocabularies == b.vocabularies);
  CHECK(a.train == b.train);
  fs::remove(path);
}

TEST_CASE("synthetic generator is deterministic") {
  auto spec = SyntheticSpec::quick();
  spec.rows = 2000;
  const auto a = synthetic_generate(spec);
  const auto b = synthetic_generate(spec);
  CHECK(a.data == b.data);
  CHECK(a.true_probabilities == b.true_probabilities);
  spec.seed += 1;
  CHECK_FALSE(synthetic_generate(spec).data == a.data);

  spec.cardinalities = {5, 0};
  CHECK_THROWS(synthetic_generate(spec));
}

TEST_CASE("zero signal leaves ln 2 as the best loss") {
  SyntheticSpec spec;
  spec.rows = 5000;
  spec.cardinalities = {50, 50};
  spec.signal = 0;
  spec.bias = 0;
  const auto split = synthetic_generate(spec);
  const RowRange all{0, split.data.size()};
  CHECK(bayes_loss(split, all) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  for (double p : split.true_probabilities) CHECK(p == 0.5);
}

TEST_CASE("separable planted task has Bayes loss near zero") {
  SyntheticSpec spec;
  spec.rows = 2000;
  spec.cardinalities = {2};
  spec.num_dense = 0;
  spec.bias = 0;
  spec.signal = 1e4;
  const auto split = synthetic_generate(spec);
  CHECK(bayes_loss(split, {0, split.data.size()}) < 1e-3);
}

TEST_CASE("oracle on the default task lands near the Bayes loss") {
  const auto split = synthetic_generate(SyntheticSpec{});
  const RowRange all{0, split.data.size()};
  const double bayes = bayes_loss(split, all);
  const double oracle = oracle_loss(split, all);
  CHECK(std::abs(oracle - bayes) <= 0.02);
  CHECK(bayes > 0.1);
  CHECK(bayes < std::log(2.0));
}

TEST_CASE("category frequencies follow the requested law") {
  SyntheticSpec spec;
  spec.rows = 100'000;
  spec.cardinalities = {20};
  spec.num_dense = 2;
  for (double zipf : {0.0, 1.0}) {
    spec.zipf = zipf;
    const auto split = synthetic_generate(spec);
    std::vector<double> counts(20, 0.0);
    for (std::size_t r = 0; r < split.data.size(); ++r) counts[split.data.categorical_row(r)[0]] += 1;
    const auto w = synthetic_category_weights(20, zipf);
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    double chi2 = 0;
    for (std::size_t c = 0; c < 20; ++c) {
      const double expected = double(spec.rows) * w[c] / total;
      chi2 += (counts[c] - expected) * (counts[c] - expected) / expected;
    }
    // 99.9th percentile of chi-square with 19 degrees of freedom.
    CHECK(chi2 < 43.82);
  }
}

TEST_CASE("dataset cache round trips") {
  auto spec = SyntheticSpec::quick();
  spec.rows = 700;
  const auto split = synthetic_generate(spec);
  const auto path = temp_file("cache.bin");
  save_dataset_cache(split, path.string());
  const auto back = load_dataset_cache(path.string());
  CHECK(back.data == split.data);
  CHECK(back.train == split.train);
  CHECK(back.validation == split.validation);
  CHECK(back.test == split.test);
  CHECK(back.cardinalities == split.cardinalities);

  {
    std::ofstream bad(path, std::ios::binary);
    bad << "NOPE";
  }
  CHECK_THROWS(load_dataset_cache(path.string()));
  fs::remove(path);
}

TEST_CASE("criteo kaggle cardinalities") {
  const auto cards = criteo_kaggle_cardinalities();
  CHECK(cards.size() == 26);
  CHECK(std::accumulate(cards.begin(), cards.end(), Index{0}) == 33'762'577);
}
