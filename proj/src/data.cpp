#include "compemb/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <random>
#include <stdexcept>

#include "compemb/embedding.hpp"

namespace compemb {

void Dataset::push_back(std::uint8_t label, std::span<const float> dense_values,
                        std::span<const std::uint32_t> cats) {
  if (dense_values.size() != num_dense || cats.size() != num_categorical) {
    throw std::invalid_argument("record width does not match the dataset");
  }
  labels.push_back(label);
  dense.insert(dense.end(), dense_values.begin(), dense_values.end());
  categorical.insert(categorical.end(), cats.begin(), cats.end());
}

SplitRanges seventh_split(std::size_t rows) {
  SplitRanges s;
  const std::size_t train_end = rows * 6 / 7;
  const std::size_t rest = rows - train_end;
  const std::size_t val_end = train_end + (rest + 1) / 2;
  s.train = {0, train_end};
  s.validation = {train_end, val_end};
  s.test = {val_end, rows};
  return s;
}

double transform_dense(std::optional<long long> raw) {
  if (!raw || *raw < 0) return 0.0;
  return std::log1p(static_cast<double>(*raw));
}

std::uint32_t map_categorical(std::string_view token, const Enumeration& vocab) {
  if (token.empty()) return 0;
  auto idx = vocab.find(token);
  return idx ? static_cast<std::uint32_t>(*idx + 1) : 0;
}

// ---------------------------------------------------------------------------
// Criteo
// ---------------------------------------------------------------------------

namespace {

struct GzFile {
  gzFile handle = nullptr;
  explicit GzFile(const std::string& path) : handle(gzopen(path.c_str(), "rb")) {
    if (!handle) throw std::runtime_error("cannot open dataset '" + path + "'");
    gzbuffer(handle, 1 << 20);
  }
  ~GzFile() {
    if (handle) gzclose(handle);
  }
  GzFile(const GzFile&) = delete;
  GzFile& operator=(const GzFile&) = delete;

  bool getline(std::string& line) {
    line.clear();
    char buf[8192];
    while (gzgets(handle, buf, sizeof buf)) {
      line.append(buf);
      if (!line.empty() && line.back() == '\n') {
        line.pop_back();
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return true;
      }
    }
    return !line.empty();
  }
};

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::optional<long long> parse_int(std::string_view s, bool& ok) {
  ok = true;
  if (s.empty()) return std::nullopt;
  long long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) ok = false;
  return v;
}

}  // namespace

DatasetSplit load_criteo_tsv(const std::string& path, const CriteoOptions& options) {
  constexpr std::size_t kFields = 1 + kCriteoDense + kCriteoCategorical;

  // First pass: line count, so the training range (the first six sevenths)
  // is known before vocabularies are built.
  std::size_t total = 0;
  {
    GzFile in(path);
    std::string line;
    while (in.getline(line)) {
      ++total;
      if (options.limit && total >= *options.limit) break;
    }
  }
  const auto ranges = seventh_split(total);

  DatasetSplit split;
  split.data.num_dense = kCriteoDense;
  split.data.num_categorical = kCriteoCategorical;
  split.vocabularies.resize(kCriteoCategorical);

  GzFile in(path);
  std::string line;
  std::size_t line_no = 0;
  std::size_t skipped = 0;
  std::size_t kept_train = 0, kept_val = 0;
  std::array<float, kCriteoDense> dense{};
  std::array<std::uint32_t, kCriteoCategorical> cats{};
  while (line_no < total && in.getline(line)) {
    const std::size_t current = line_no++;
    auto fields = split_tabs(line);
    if (fields.size() != kFields) {
      ++skipped;
      continue;
    }
    bool ok = true;
    bool field_ok = true;
    auto label = parse_int(fields[0], field_ok);
    ok &= field_ok && (!label || *label == 0 || *label == 1);
    for (std::size_t d = 0; d < kCriteoDense && ok; ++d) {
      auto v = parse_int(fields[1 + d], field_ok);
      ok &= field_ok;
      dense[d] = static_cast<float>(transform_dense(v));
    }
    if (!ok) {
      ++skipped;
      continue;
    }
    const bool is_train = current < ranges.train.end;
    for (std::size_t c = 0; c < kCriteoCategorical; ++c) {
      auto token = fields[1 + kCriteoDense + c];
      if (is_train && !token.empty()) {
        cats[c] = static_cast<std::uint32_t>(split.vocabularies[c].insert(token) + 1);
      } else {
        cats[c] = map_categorical(token, split.vocabularies[c]);
      }
    }
    split.data.push_back(static_cast<std::uint8_t>(label.value_or(0)), dense, cats);
    if (is_train) {
      ++kept_train;
    } else if (current < ranges.validation.end) {
      ++kept_val;
    }
  }
  if (total > 0 && static_cast<double>(skipped) > options.max_skip_fraction * static_cast<double>(total)) {
    throw std::runtime_error("'" + path + "': " + std::to_string(skipped) + " of " + std::to_string(total) +
                             " lines malformed");
  }
  split.skipped_lines = skipped;
  split.train = {0, kept_train};
  split.validation = {kept_train, kept_train + kept_val};
  split.test = {kept_train + kept_val, split.data.size()};
  for (const auto& v : split.vocabularies) split.cardinalities.push_back(v.size() + 1);
  return split;
}

// ---------------------------------------------------------------------------
// Synthetic
// ---------------------------------------------------------------------------

SyntheticSpec SyntheticSpec::quick() {
  SyntheticSpec s;
  s.rows = 7'000;
  s.cardinalities = {200, 200, 50, 10};
  return s;
}

std::vector<double> synthetic_category_weights(Index cardinality, double zipf) {
  std::vector<double> w(cardinality);
  for (Index r = 0; r < cardinality; ++r) w[r] = zipf == 0.0 ? 1.0 : std::pow(static_cast<double>(r + 1), -zipf);
  return w;
}

DatasetSplit synthetic_generate(const SyntheticSpec& spec) {
  for (std::size_t f = 0; f < spec.cardinalities.size(); ++f) {
    if (spec.cardinalities[f] == 0) {
      throw std::invalid_argument("synthetic feature " + std::to_string(f) + " has cardinality 0");
    }
  }
  if (spec.latent_dim == 0) throw std::invalid_argument("latent_dim must be >= 1");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t F = spec.cardinalities.size();
  const std::size_t L = spec.latent_dim;

  // Planted per-category scores <w_f, u_{f,x}> with u ~ N(0, I), |w_f| = 1.
  std::vector<std::vector<double>> scores(F);
  for (std::size_t f = 0; f < F; ++f) {
    std::vector<double> w(L);
    double norm = 0;
    for (auto& x : w) {
      x = normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : w) x /= norm;
    scores[f].resize(spec.cardinalities[f]);
    for (auto& s : scores[f]) {
      double acc = 0;
      for (std::size_t l = 0; l < L; ++l) acc += w[l] * normal(rng);
      s = acc;
    }
  }
  // Dense values are uniform on [0, 2); the readout has unit variance.
  std::vector<double> dense_w(spec.num_dense);
  for (auto& v : dense_w) {
    v = (rng() & 1 ? 1.0 : -1.0) * std::sqrt(3.0 / static_cast<double>(std::max<std::size_t>(spec.num_dense, 1)));
  }

  std::vector<std::discrete_distribution<Index>> pickers;
  for (std::size_t f = 0; f < F; ++f) {
    auto w = synthetic_category_weights(spec.cardinalities[f], spec.zipf);
    pickers.emplace_back(w.begin(), w.end());
  }

  DatasetSplit split;
  split.data.num_dense = spec.num_dense;
  split.data.num_categorical = F;
  split.cardinalities = spec.cardinalities;
  split.data.labels.reserve(spec.rows);
  split.true_probabilities.reserve(spec.rows);
  const double norm = std::sqrt(static_cast<double>(F + (spec.num_dense > 0 ? 1 : 0)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<float> dense(spec.num_dense);
  std::vector<std::uint32_t> cats(F);
  for (std::size_t r = 0; r < spec.rows; ++r) {
    double z = 0;
    for (std::size_t d = 0; d < spec.num_dense; ++d) {
      const double x = 2.0 * unit(rng);
      dense[d] = static_cast<float>(x);
      z += dense_w[d] * (x - 1.0);
    }
    for (std::size_t f = 0; f < F; ++f) {
      const Index c = pickers[f](rng);
      cats[f] = static_cast<std::uint32_t>(c);
      z += scores[f][c];
    }
    const double logit = spec.bias + spec.signal * z / std::max(norm, 1.0);
    const double p = nn::sigmoid(logit);
    const std::uint8_t label = unit(rng) < p ? 1 : 0;
    split.data.push_back(label, dense, cats);
    split.true_probabilities.push_back(p);
  }
  const auto ranges = seventh_split(spec.rows);
  split.train = ranges.train;
  split.validation = ranges.validation;
  split.test = ranges.test;
  return split;
}

double bayes_loss(const DatasetSplit& split, RowRange range) {
  if (split.true_probabilities.empty()) throw std::invalid_argument("dataset has no planted probabilities");
  double total = 0;
  for (std::size_t r = range.begin; r < range.end; ++r) {
    const double p = std::clamp(split.true_probabilities[r], nn::kProbabilityClamp, 1.0 - nn::kProbabilityClamp);
    total += -(p * std::log(p) + (1.0 - p) * std::log(1.0 - p));
  }
  return range.size() ? total / static_cast<double>(range.size()) : 0.0;
}

double oracle_loss(const DatasetSplit& split, RowRange range) {
  if (split.true_probabilities.empty()) throw std::invalid_argument("dataset has no planted probabilities");
  double total = 0;
  for (std::size_t r = range.begin; r < range.end; ++r) {
    total += nn::bce(split.true_probabilities[r], split.data.label(r)).loss;
  }
  return range.size() ? total / static_cast<double>(range.size()) : 0.0;
}

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'C', 'E', 'D', 'S'};
constexpr std::uint64_t kCacheVersion = 1;

void write_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_le(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("truncated dataset cache");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}
}  // namespace

void save_dataset_cache(const DatasetSplit& split, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  const auto& d = split.data;
  out.write(kMagic, 4);
  for (std::uint64_t v : {kCacheVersion, std::uint64_t(d.size()), std::uint64_t(d.num_dense),
                          std::uint64_t(d.num_categorical), std::uint64_t(split.train.end),
                          std::uint64_t(split.validation.end)}) {
    detail::write_u64_le(out, v);
  }
  for (Index c : split.cardinalities) detail::write_u64_le(out, c);
  for (std::size_t r = 0; r < d.size(); ++r) {
    out.put(static_cast<char>(d.labels[r]));
    for (float v : d.dense_row(r)) detail::write_f32_le(out, v);
    for (auto c : d.categorical_row(r)) write_u32_le(out, c);
  }
  if (!out) throw std::runtime_error("failed writing " + path);
}

DatasetSplit load_dataset_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) {
    throw std::runtime_error(path + " is not a dataset cache");
  }
  if (detail::read_u64_le(in) != kCacheVersion) throw std::runtime_error(path + ": unsupported cache version");
  const auto rows = detail::read_u64_le(in);
  DatasetSplit split;
  split.data.num_dense = detail::read_u64_le(in);
  split.data.num_categorical = detail::read_u64_le(in);
  const auto train_end = detail::read_u64_le(in);
  const auto val_end = detail::read_u64_le(in);
  for (std::size_t f = 0; f < split.data.num_categorical; ++f) split.cardinalities.push_back(detail::read_u64_le(in));
  std::vector<float> dense(split.data.num_dense);
  std::vector<std::uint32_t> cats(split.data.num_categorical);
  for (std::uint64_t r = 0; r < rows; ++r) {
    char label = 0;
    if (!in.get(label)) throw std::runtime_error("truncated dataset cache");
    for (auto& v : dense) v = detail::read_f32_le(in);
    for (auto& c : cats) c = read_u32_le(in);
    split.data.push_back(static_cast<std::uint8_t>(label), dense, cats);
  }
  split.train = {0, train_end};
  split.validation = {train_end, val_end};
  split.test = {val_end, rows};
  return split;
}

std::vector<Index> criteo_kaggle_cardinalities() {
  return {1460,    583,   10131227, 2202608, 305, 24,      12517, 633,    3,  93145, 5683,   8351593, 3194,
          27,      14992, 5461306,  10,      5652, 2173, 4,       7046547, 18,  15,   286181, 105,     142572};
}

}  // namespace compemb
