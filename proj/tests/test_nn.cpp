#include <cmath>
#include <random>

#include "compemb/nn.hpp"
#include "doctest.h"
#include "support/finite_difference.hpp"

using namespace compemb;
using namespace compemb::nn;

namespace {

std::vector<double> gaussian(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

}  // namespace

TEST_CASE("a stack without hidden layers is affine") {
  MlpLayout layout({2, 2});
  // A = [[1, 2], [3, 4]], b = (0.5, -1)
  const std::vector<double> params{1, 2, 3, 4, 0.5, -1};
  MlpCache<double> cache;
  std::vector<double> out(2);
  mlp_forward<double>(layout, params, std::vector<double>{1, -1}, cache, out);
  CHECK(out == std::vector<double>{-0.5, -2});
}

TEST_CASE("relu blocks negative pre-activations and their gradient") {
  MlpLayout layout({1, 1, 1});
  // hidden = relu(1 * x - 5), out = 2 * hidden + 0
  const std::vector<double> params{1, -5, 2, 0};
  MlpCache<double> cache;
  std::vector<double> out(1);
  mlp_forward<double>(layout, params, std::vector<double>{1}, cache, out);
  CHECK(cache.outputs[1][0] == 0.0);
  CHECK(out[0] == 0.0);
  std::vector<double> gp(4, 0.0), gx(1);
  mlp_backward<double>(layout, params, cache, std::vector<double>{1}, gp, gx);
  CHECK(gx[0] == 0.0);
  CHECK(gp[0] == 0.0);
  CHECK(gp[1] == 0.0);
}

TEST_CASE("mlp input dim is checked") {
  MlpLayout layout({3, 2});
  std::vector<double> params(layout.param_count()), out(2);
  MlpCache<double> cache;
  CHECK_THROWS(mlp_forward<double>(layout, params, std::vector<double>{1, 2}, cache, out));
  CHECK_THROWS(MlpLayout({3}));
  CHECK_THROWS(MlpLayout({3, 0, 1}));
}

TEST_CASE("mlp gradients match finite differences") {
  std::mt19937_64 rng(1);
  for (auto output : {Activation::identity, Activation::relu}) {
    MlpLayout layout({4, 8, 2}, output);
    std::vector<double> params(layout.param_count());
    mlp_init<double>(layout, params, rng);
    auto x = gaussian(4, rng);
    const auto r = gaussian(2, rng);
    auto f = [&] {
      MlpCache<double> cache;
      std::vector<double> out(2);
      mlp_forward<double>(layout, params, x, cache, out);
      return dot(out, r);
    };
    auto ptrs = testing::pointers(params);
    auto xp = testing::pointers(x);
    ptrs.insert(ptrs.end(), xp.begin(), xp.end());
    const auto numeric = testing::numeric_gradient(f, ptrs);

    MlpCache<double> cache;
    std::vector<double> out(2);
    mlp_forward<double>(layout, params, x, cache, out);
    std::vector<double> gp(params.size(), 0.0), gx(4);
    mlp_backward<double>(layout, params, cache, r, gp, gx);
    gp.insert(gp.end(), gx.begin(), gx.end());
    CHECK(testing::relative_error(gp, numeric) <= 1e-5);
  }
}

TEST_CASE("cross layer examples") {
  const std::vector<double> x0{1, 2, 3}, xl{0.5, -1, 2}, zero(3, 0.0);
  std::vector<double> out(3);
  cross_layer_forward<double>(x0, xl, zero, zero, out);
  CHECK(out == xl);

  // x0 = e_1, x_l . w = 3 with x_l = 0 is impossible, so b carries the offset:
  // pick x_l = 0 and a nonzero w gives 0; use x_l = (3,0,0), w = e_1, b = -x_l.
  const std::vector<double> e1{1, 0, 0}, x3{3, 0, 0}, b{-3, 0, 0};
  cross_layer_forward<double>(e1, x3, e1, b, out);
  CHECK(out == std::vector<double>{3, 0, 0});

  CHECK_THROWS(cross_layer_forward<double>(x0, std::vector<double>{1, 2}, zero, zero, out));
}

TEST_CASE("cross stack gradients match finite differences") {
  std::mt19937_64 rng(2);
  for (std::size_t depth : {1, 2, 6}) {
    CrossStack<double> cross(4, depth);
    cross.init(rng);
    for (auto& v : cross.params()) v += 0.1 * std::normal_distribution<double>()(rng);
    auto x0 = gaussian(4, rng);
    const auto r = gaussian(4, rng);
    auto f = [&] {
      std::vector<std::vector<double>> states;
      std::vector<double> out(4);
      cross.forward(x0, states, out);
      return dot(out, r);
    };
    auto ptrs = testing::pointers(cross.params());
    auto xp = testing::pointers(x0);
    ptrs.insert(ptrs.end(), xp.begin(), xp.end());
    const auto numeric = testing::numeric_gradient(f, ptrs);

    std::vector<std::vector<double>> states;
    std::vector<double> out(4);
    cross.forward(x0, states, out);
    std::vector<double> gp(cross.param_count(), 0.0), gx(4);
    cross.backward(states, r, gp, gx);
    gp.insert(gp.end(), gx.begin(), gx.end());
    CHECK(testing::relative_error(gp, numeric) <= 1e-5);
  }
}

TEST_CASE("dot interaction") {
  std::vector<double> out(1);
  dot_interaction_forward<double>(std::vector<double>{1, 0, 0, 1}, 2, out);
  CHECK(out[0] == 0.0);

  const double s = 1 / std::sqrt(2.0);
  std::vector<double> same;
  for (int k = 0; k < 5; ++k) same.insert(same.end(), {s, s});
  std::vector<double> all(interaction_count(5));
  dot_interaction_forward<double>(same, 2, all);
  for (double v : all) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));

  std::mt19937_64 rng(3);
  auto v = gaussian(4 * 3, rng);
  std::vector<double> got(6);
  dot_interaction_forward<double>(v, 3, got);
  std::vector<double> expect;
  for (int a = 0; a < 4; ++a) {
    for (int b = a + 1; b < 4; ++b) {
      double acc = 0;
      for (int d = 0; d < 3; ++d) acc += v[a * 3 + d] * v[b * 3 + d];
      expect.push_back(acc);
    }
  }
  CHECK(got == expect);

  const auto r = gaussian(6, rng);
  const auto numeric = testing::numeric_gradient(
      [&] {
        std::vector<double> o(6);
        dot_interaction_forward<double>(v, 3, o);
        return dot(o, r);
      },
      testing::pointers(v));
  std::vector<double> g(v.size(), 0.0);
  dot_interaction_backward<double>(v, 3, r, g);
  CHECK(testing::relative_error(g, numeric) <= 1e-5);

  CHECK_THROWS(dot_interaction_forward<double>(std::vector<double>{1, 2, 3}, 2, out));
}

TEST_CASE("binary cross-entropy") {
  CHECK(bce(0.5, 0).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce(0.5, 1).loss == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(bce(0.9, 0).loss == doctest::Approx(2.3025850929940455).epsilon(1e-12));
  CHECK(bce(1.0 - 1e-9, 1).loss < 1e-6);
  CHECK(bce(1e-9, 0).loss < 1e-6);
  CHECK(std::isfinite(bce(0.0, 1).loss));
  CHECK(std::isfinite(bce(1.0, 0).loss));
  CHECK(bce(0.0, 1).grad == 0.0);

  for (double y : {0.0, 1.0}) {
    for (double p : {0.2, 0.7}) {
      double q = p;
      const auto numeric = testing::numeric_gradient([&] { return bce(q, y).loss; }, {&q});
      CHECK(bce(p, y).grad == doctest::Approx(numeric[0]).epsilon(1e-6));
    }
    CHECK(bce_with_logit(0.3, y).grad == doctest::Approx(sigmoid(0.3) - y));
  }
  CHECK(sigmoid(-800) >= 0.0);
  CHECK(sigmoid(800) == 1.0);
}
