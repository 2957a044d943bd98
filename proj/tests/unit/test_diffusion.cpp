#include <doctest.h>

#include <cmath>
#include <random>

#include "dada/diffusion.hpp"
#include "dada/error.hpp"
#include "dada/random.hpp"
#include "helpers.hpp"

using namespace dada;
using dada::testing::max_abs;

TEST_CASE("linear schedule: single step") {
  auto s = build_linear_schedule(1, 0.5, 0.5);
  CHECK(s.betas() == std::vector<double>{0.5});
  CHECK(s.alpha_bar(1) == doctest::Approx(0.5));
}

TEST_CASE("schedule: two betas give products 0.9 and 0.72") {
  NoiseSchedule s({0.1, 0.2});
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(s.alpha_bar(2) == doctest::Approx(0.72).epsilon(1e-15));
  auto lin = build_linear_schedule(2, 0.1, 0.2);
  CHECK(lin.betas()[0] == doctest::Approx(0.1));
  CHECK(lin.betas()[1] == doctest::Approx(0.2));
}

TEST_CASE("schedule rejects bad inputs") {
  CHECK_THROWS_AS(build_linear_schedule(0, 1e-4, 0.02), Error);
  CHECK_THROWS_AS(build_linear_schedule(10, 0.0, 0.02), Error);
  CHECK_THROWS_AS(build_linear_schedule(10, 0.1, 1.0), Error);
  CHECK_THROWS_AS(build_linear_schedule(10, 0.2, 0.1), Error);
  CHECK_THROWS_AS(NoiseSchedule({0.5, -0.1}), Error);
  auto s = build_linear_schedule(5, 1e-4, 0.02);
  CHECK_THROWS(s.beta(0));
  CHECK_THROWS(s.alpha_bar(6));
}

TEST_CASE("property: randomized schedules are strictly decreasing and consistent") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(1e-5, 0.3);
  for (int trial = 0; trial < 200; ++trial) {
    const int T = 1 + int(rng() % 300);
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    auto s = build_linear_schedule(T, a, b);
    REQUIRE(s.steps() == T);
    REQUIRE(s.alphas().size() == std::size_t(T));
    REQUIRE(s.alpha_bars().size() == std::size_t(T));
    double prev = 1.0;
    for (int t = 1; t <= T; ++t) {
      const double ab = s.alpha_bar(t);
      REQUIRE(ab < prev);
      REQUIRE(ab > 0.0);
      REQUIRE(std::abs(ab - prev * s.alpha(t)) <= 1e-12);
      prev = ab;
    }
  }
}

TEST_CASE("forward_diffuse: scalar hand value and limits") {
  NoiseSchedule s({0.75});  // alpha_bar_1 = 0.25
  auto x0 = torch::ones({1, 1, 1}, torch::kFloat64);
  auto eps = torch::full({1, 1, 1}, 0.5, torch::kFloat64);
  CHECK(forward_diffuse(x0, 1, eps, s).item<double>() == doctest::Approx(0.5 + std::sqrt(0.75) * 0.5).epsilon(1e-12));
  CHECK(forward_diffuse(x0, 1, eps, s).item<double>() == doctest::Approx(0.9330).epsilon(1e-4));

  auto z = torch::zeros({3, 4, 4}, torch::kFloat64);
  auto e = torch::randn({3, 4, 4}, torch::kFloat64);
  CHECK(max_abs(forward_diffuse(z, 1, e, s), std::sqrt(0.75) * e) < 1e-15);

  NoiseSchedule tiny({1e-12});
  auto x = torch::rand({3, 4, 4}, torch::kFloat64);
  CHECK(max_abs(forward_diffuse(x, 1, e, tiny), x) < 1e-5);
  CHECK_THROWS_AS(forward_diffuse(x, 1, torch::zeros({3, 4, 5}, torch::kFloat64), tiny), Error);
}

TEST_CASE("forward_diffuse: batched t matches per-sample scalar t") {
  auto s = build_linear_schedule(50, 1e-4, 0.05);
  auto x0 = torch::randn({4, 3, 5, 5});
  auto eps = torch::randn({4, 3, 5, 5});
  auto t = torch::tensor({1, 7, 30, 50}, torch::kInt64);
  auto batched = forward_diffuse(x0, t, eps, s);
  for (int i = 0; i < 4; ++i) {
    auto one = forward_diffuse(x0[i], t[i].item<int>(), eps[i], s);
    CHECK(max_abs(batched[i], one) < 1e-5);
  }
}

TEST_CASE("posterior_mean: t=1 with the true noise recovers x0") {
  auto s = build_linear_schedule(100, 1e-4, 0.02);
  auto x0 = torch::rand({2, 3, 6, 6}, torch::kFloat64) * 2 - 1;
  auto eps = torch::randn({2, 3, 6, 6}, torch::kFloat64);
  auto xt = forward_diffuse(x0, 1, eps, s);
  CHECK(max_abs(posterior_mean(xt, eps, 1, s), x0) < 1e-6);
}

TEST_CASE("posterior_mean: zero eps and an independent 2x2 re-evaluation") {
  NoiseSchedule s({0.1, 0.3});
  auto xt = torch::tensor({{0.3, -0.7}, {1.2, 0.05}}, torch::kFloat64).view({1, 2, 2});
  CHECK(max_abs(posterior_mean(xt, torch::zeros_like(xt), 2, s), xt / std::sqrt(0.7)) < 1e-15);

  auto ep = torch::tensor({{-0.4, 0.9}, {0.2, -1.5}}, torch::kFloat64).view({1, 2, 2});
  const double alpha = 0.7, abar = 0.9 * 0.7;
  auto out = posterior_mean(xt, ep, 2, s);
  auto xa = xt.accessor<double, 3>();
  auto ea = ep.accessor<double, 3>();
  auto oa = out.accessor<double, 3>();
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const double expect = (xa[0][i][j] - (1 - alpha) / std::sqrt(1 - abar) * ea[0][i][j]) / std::sqrt(alpha);
      CHECK(std::abs(oa[0][i][j] - expect) < 1e-10);
    }
}

TEST_CASE("reverse_step: zero noise and sqrt(beta) offset") {
  NoiseSchedule s({0.01, 0.04});
  auto xt = torch::randn({3, 4, 4}, torch::kFloat64);
  auto ep = torch::randn({3, 4, 4}, torch::kFloat64);
  auto mu = posterior_mean(xt, ep, 2, s);
  CHECK(max_abs(reverse_step(xt, ep, 2, s, torch::zeros_like(xt)), mu) == 0.0);
  CHECK(max_abs(reverse_step(xt, ep, 2, s, torch::ones_like(xt)), mu + 0.2) < 1e-12);
  CHECK_THROWS_AS(reverse_step(xt, ep, 2, s, torch::zeros({3, 4, 5}, torch::kFloat64)), Error);
}

TEST_CASE("full reverse loop with oracle noise reconstructs a constant image") {
  auto s = build_linear_schedule(100, 1e-4 * 10, 0.02 * 10);
  auto gen = make_generator(5);
  auto x0 = torch::full({3, 8, 8}, 0.4, torch::kFloat64);
  auto x = torch::randn({3, 8, 8}, gen, torch::kFloat64);
  for (int t = s.steps(); t >= 1; --t) {
    // Exact noise that explains x_t given the known x0.
    auto eps = (x - std::sqrt(s.alpha_bar(t)) * x0) / std::sqrt(1 - s.alpha_bar(t));
    auto noise = t > 1 ? torch::randn({3, 8, 8}, gen, torch::kFloat64) : torch::zeros_like(x);
    x = reverse_step(x, eps, t, s, noise);
  }
  CHECK((x - x0).abs().mean().item<double>() < 0.05);
}

TEST_CASE("determinism: same seed gives bit-identical trajectories") {
  auto s = build_linear_schedule(20, 1e-3, 0.05);
  auto run = [&](std::uint64_t seed) {
    auto g = make_generator(seed);
    auto x = torch::randn({3, 4, 4}, g);
    for (int t = s.steps(); t >= 1; --t) {
      auto noise = t > 1 ? torch::randn({3, 4, 4}, g) : torch::zeros_like(x);
      x = reverse_step(x, 0.1 * x, t, s, noise);
    }
    return x;
  };
  CHECK(torch::equal(run(3), run(3)));
  CHECK_FALSE(torch::equal(run(3), run(4)));
}
