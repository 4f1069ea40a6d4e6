#include <cmath>
#include <functional>
#include <random>

#include "compemb/run.hpp"

namespace compemb {

namespace {

constexpr double kStep = 1e-6;

struct Problem {
  std::string name;
  std::vector<double*> params;
  std::function<double()> loss;
  std::function<std::vector<double>()> grad;  // parallel to params
};

GradcheckResult evaluate(const Problem& p, const GradcheckOptions& options) {
  auto analytic = p.grad();
  if (options.inject_sign_flip) {
    for (auto& g : analytic) g = -g;
  }
  double diff = 0, na = 0, nn_ = 0;
  for (std::size_t k = 0; k < p.params.size(); ++k) {
    double& w = *p.params[k];
    const double saved = w;
    w = saved + kStep;
    const double up = p.loss();
    w = saved - kStep;
    const double down = p.loss();
    w = saved;
    const double numeric = (up - down) / (2 * kStep);
    diff += (analytic[k] - numeric) * (analytic[k] - numeric);
    na += analytic[k] * analytic[k];
    nn_ += numeric * numeric;
  }
  GradcheckResult r;
  r.name = p.name;
  r.max_relative_error = std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn_), 1e-12});
  r.passed = r.max_relative_error <= options.tolerance;
  return r;
}

std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

template <typename Tables>
std::vector<double*> table_params(Tables& tables) {
  std::vector<double*> ptrs;
  for (auto& t : tables) {
    for (auto& v : t.values()) ptrs.push_back(&v);
  }
  return ptrs;
}

// Scatters sparse row gradients into a dense vector over `tables`.
template <typename Tables>
std::vector<double> densify(const Tables& tables, const std::vector<RowGradients<double>>& grads) {
  std::vector<double> out;
  for (std::size_t j = 0; j < tables.size(); ++j) {
    std::vector<double> g(tables[j].param_count(), 0.0);
    const std::size_t w = grads[j].width();
    for (std::size_t k = 0; k < grads[j].size(); ++k) {
      const auto vals = grads[j].values(k);
      std::copy(vals.begin(), vals.end(), g.begin() + grads[j].row_id(k) * w);
    }
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

void add_composition(std::vector<GradcheckResult>& results, const GradcheckOptions& options, std::mt19937_64& rng,
                     std::string name, PartitionSet ps, std::vector<std::size_t> dims, CompositionOp op) {
  auto scheme = CompositionScheme<double>::random(std::move(ps), std::move(dims), op, rng);
  const Index n = scheme.domain_size();
  std::uniform_int_distribution<Index> pick(0, n - 1);
  const Index i = pick(rng);
  const auto r = random_vector(scheme.out_dim(), rng);
  Problem p;
  p.name = std::move(name);
  p.params = table_params(scheme.tables());
  p.loss = [&] {
    std::vector<double> out(r.size());
    scheme.lookup(i, out);
    return dot(out, r);
  };
  p.grad = [&] {
    auto g = scheme.make_gradients();
    scheme.backward(i, r, g);
    return densify(scheme.tables(), g);
  };
  results.push_back(evaluate(p, options));
}

void add_path(std::vector<GradcheckResult>& results, const GradcheckOptions& options, std::mt19937_64& rng,
              std::string name, std::vector<std::size_t> hidden) {
  const std::size_t dim = 4;
  auto scheme = PathScheme<double>::random(PartitionSet::generalized_qr(12, {3, 4}), dim, hidden, rng);
  const Index i = 7;
  const auto r = random_vector(dim, rng);
  Problem p;
  p.name = std::move(name);
  for (auto& v : scheme.base().values()) p.params.push_back(&v);
  auto stage_ptrs = table_params(scheme.stages());
  p.params.insert(p.params.end(), stage_ptrs.begin(), stage_ptrs.end());
  p.loss = [&] { return dot(scheme.lookup(i), r); };
  p.grad = [&] {
    auto g = scheme.make_gradients();
    scheme.backward(i, r, g);
    std::vector<EmbeddingTable<double>> all{scheme.base()};
    all.insert(all.end(), scheme.stages().begin(), scheme.stages().end());
    return densify(all, g);
  };
  results.push_back(evaluate(p, options));
}

}  // namespace

std::vector<GradcheckResult> run_gradchecks(const GradcheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::vector<GradcheckResult> results;

  add_composition(results, options, rng, "concat", PartitionSet::quotient_remainder(10, 3), {3, 4},
                  CompositionOp::concat);
  add_composition(results, options, rng, "add", PartitionSet::quotient_remainder(10, 3), {4}, CompositionOp::add);
  add_composition(results, options, rng, "mult", PartitionSet::generalized_qr(24, {2, 3, 4}), {4},
                  CompositionOp::mult);
  add_composition(results, options, rng, "feature_generation", PartitionSet::crt(10, {2, 5}), {3},
                  CompositionOp::feature_generation);

  add_path(results, options, rng, "path_linear", {});
  for (auto h : options.path_hidden_sizes) add_path(results, options, rng, "path_mlp_h" + std::to_string(h), {h});

  {
    // Dense MLP: parameters and input.
    nn::MlpLayout layout({5, 7, 6, 3}, nn::Activation::relu);
    std::vector<double> params(layout.param_count());
    nn::mlp_init<double>(layout, params, rng);
    auto x = random_vector(5, rng);
    const auto r = random_vector(3, rng);
    Problem p;
    p.name = "mlp";
    for (auto& v : params) p.params.push_back(&v);
    for (auto& v : x) p.params.push_back(&v);
    p.loss = [&] {
      nn::MlpCache<double> cache;
      std::vector<double> out(3);
      nn::mlp_forward<double>(layout, params, x, cache, out);
      return dot(out, r);
    };
    p.grad = [&] {
      nn::MlpCache<double> cache;
      std::vector<double> out(3);
      nn::mlp_forward<double>(layout, params, x, cache, out);
      std::vector<double> gp(params.size(), 0.0), gx(x.size());
      nn::mlp_backward<double>(layout, params, cache, r, gp, gx);
      gp.insert(gp.end(), gx.begin(), gx.end());
      return gp;
    };
    results.push_back(evaluate(p, options));
  }

  {
    nn::CrossStack<double> cross(5, 3);
    cross.init(rng);
    for (auto& v : cross.params()) v += 0.1 * std::normal_distribution<double>(0, 1)(rng);
    auto x0 = random_vector(5, rng);
    const auto r = random_vector(5, rng);
    Problem p;
    p.name = "cross";
    for (auto& v : cross.params()) p.params.push_back(&v);
    for (auto& v : x0) p.params.push_back(&v);
    p.loss = [&] {
      std::vector<std::vector<double>> states;
      std::vector<double> out(5);
      cross.forward(x0, states, out);
      return dot(out, r);
    };
    p.grad = [&] {
      std::vector<std::vector<double>> states;
      std::vector<double> out(5);
      cross.forward(x0, states, out);
      std::vector<double> gp(cross.param_count(), 0.0), gx(5);
      cross.backward(states, r, gp, gx);
      gp.insert(gp.end(), gx.begin(), gx.end());
      return gp;
    };
    results.push_back(evaluate(p, options));
  }

  {
    const std::size_t n = 4, dim = 3;
    auto vectors = random_vector(n * dim, rng);
    const auto r = random_vector(nn::interaction_count(n), rng);
    Problem p;
    p.name = "dot_interaction";
    for (auto& v : vectors) p.params.push_back(&v);
    p.loss = [&] {
      std::vector<double> out(r.size());
      nn::dot_interaction_forward<double>(vectors, dim, out);
      return dot(out, r);
    };
    p.grad = [&] {
      std::vector<double> g(vectors.size(), 0.0);
      nn::dot_interaction_backward<double>(vectors, dim, r, g);
      return g;
    };
    results.push_back(evaluate(p, options));
  }

  for (double y : {0.0, 1.0}) {
    double prob = 0.3;
    Problem p;
    p.name = y > 0 ? "bce_positive" : "bce_negative";
    p.params = {&prob};
    p.loss = [&] { return nn::bce(prob, y).loss; };
    p.grad = [&] { return std::vector<double>{nn::bce(prob, y).grad}; };
    results.push_back(evaluate(p, options));

    double z = -0.8;
    Problem q;
    q.name = y > 0 ? "bce_logit_positive" : "bce_logit_negative";
    q.params = {&z};
    q.loss = [&] { return nn::bce_with_logit(z, y).loss; };
    q.grad = [&] { return std::vector<double>{nn::bce_with_logit(z, y).grad}; };
    results.push_back(evaluate(q, options));
  }
  return results;
}

}  // namespace compemb
