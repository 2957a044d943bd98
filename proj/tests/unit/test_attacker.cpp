#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dada/attacker.hpp"
#include "dada/error.hpp"
#include "dada/random.hpp"
#include "helpers.hpp"

using namespace dada;
using dada::testing::StubDetector;
using dada::testing::max_abs;

namespace {

Denoiser tiny_denoiser(int T = 5) {
  torch::manual_seed(11);
  UNetConfig u;
  u.base_width = 8;
  u.time_embed_dim = 16;
  Denoiser d(u, build_linear_schedule(T, 1e-3, 0.1));
  d.freeze();
  return d;
}

struct Fixture {
  Denoiser den = tiny_denoiser();
  PixelBox region{4, 4, 12, 12};
  StubDetector det{{region}, {-1.0}, 4.0};
  torch::Tensor x_real_t, x_t, mask, eps;

  explicit Fixture(int n = 2) {
    auto g = make_generator(5);
    x_real_t = torch::randn({n, 3, 16, 16}, g);
    x_t = torch::randn({n, 3, 16, 16}, g);
    eps = torch::randn({n, 3, 16, 16}, g);
    mask = IllusoryBox::make(region, 16, 16).mask.view({1, 1, 16, 16}).expand({n, 1, 16, 16}).contiguous();
  }
  StepContext ctx(int t = 3) const {
    return StepContext{den, det, den.schedule(), t, x_real_t, x_t, mask,
                       std::vector<PixelBox>(static_cast<std::size_t>(x_t.size(0)), region), eps};
  }
};

}  // namespace

TEST_CASE("dada_update: signed step, sgn(0) = 0") {
  auto eta = torch::zeros({3}, torch::kFloat64);
  auto grad = torch::tensor({-2.0, 0.0, 5.0}, torch::kFloat64);
  auto out = dada_update(eta, grad, 0.003);
  CHECK(out[0].item<double>() == doctest::Approx(0.003));
  CHECK(out[1].item<double>() == 0.0);
  CHECK(out[2].item<double>() == doctest::Approx(-0.003));

  // alpha = 0 leaves eta untouched whatever the gradient.
  auto e2 = torch::tensor({0.1, -0.2, 0.3}, torch::kFloat64);
  CHECK(torch::equal(dada_update(e2, grad, 0.0), e2));

  CHECK_THROWS_AS(dada_update(eta, torch::zeros({4}, torch::kFloat64), 0.1), Error);
  CHECK_THROWS_AS(dada_update(eta, torch::tensor({1.0, std::nan(""), 0.0}, torch::kFloat64), 0.1), Error);
}

TEST_CASE("compose_step_input: 2x2 hand example") {
  auto xr = torch::tensor({1.0, 2.0, 3.0, 4.0}).view({1, 1, 2, 2});
  auto xt = torch::tensor({10.0, 20.0, 30.0, 40.0}).view({1, 1, 2, 2});
  auto eta = torch::full({1, 1, 2, 2}, 0.5);
  auto m = torch::tensor({1.0, 0.0, 0.0, 1.0}).view({1, 1, 2, 2});
  auto out = compose_step_input(xr, xt, eta, m);
  CHECK(torch::allclose(out, torch::tensor({10.5, 2.0, 3.0, 40.5}).view({1, 1, 2, 2})));
  CHECK(torch::equal(compose_step_input(xr, xt, eta, torch::zeros_like(m)), xr));
  CHECK_THROWS_AS(compose_step_input(xr, xt.view({1, 1, 4, 1}), eta, m), Error);
}

TEST_CASE("attack config: step size scaling and window") {
  AttackConfig c;
  c.alpha = 0.003;
  CHECK(c.step_size(200) == doctest::Approx(0.003));
  c.reference_steps = 1000;
  CHECK(c.step_size(200) == doctest::Approx(0.015));
  CHECK(c.step_size(1000) == doctest::Approx(0.003));
  CHECK(c.active_at(1));
  c.window = std::pair{10, 20};
  CHECK(!c.active_at(9));
  CHECK(c.active_at(10));
  CHECK(c.active_at(20));
  CHECK(!c.active_at(21));
  c.window = std::pair{5, 4};
  CHECK_THROWS_AS(c.validate(), Error);
  AttackConfig neg;
  neg.alpha = -1;
  CHECK_THROWS_AS(neg.validate(), Error);
}

TEST_CASE("attack_gradient is confined to the region and non-trivial inside") {
  Fixture f;
  auto g = attack_gradient(f.ctx(), torch::zeros_like(f.x_t));
  auto outside = (1 - f.mask).expand_as(g.grad);
  CHECK((g.grad * outside).abs().max().item<double>() == 0.0);
  CHECK(g.grad.abs().max().item<double>() > 0.0);
  CHECK(g.loss.sizes() == torch::IntArrayRef{2});
}

TEST_CASE("attack_gradient agrees with a finite difference of the loss along the gradient sign") {
  // Keep x_{t-1} inside [-1, 1] so the range clamp is inactive and the
  // pass-through gradient is the true one.
  Fixture f(1);
  f.x_t = f.x_t * 0.1;
  f.x_real_t = f.x_real_t * 0.1;
  f.eps.zero_();
  auto ctx = f.ctx(2);
  auto eta0 = torch::zeros_like(f.x_t);
  {
    torch::NoGradGuard ng;
    REQUIRE(emit_step(ctx, eta0).abs().max().item<double>() < 0.9);
  }
  auto g = attack_gradient(ctx, eta0);
  auto dir = torch::sign(g.grad);
  const double h = 1e-3;
  auto loss_at = [&](const torch::Tensor& e) {
    torch::NoGradGuard ng;
    auto x = emit_step(ctx, e);
    return detection_loss_illusory(f.det, to_detector_range(x), ctx.regions).per_image.item<double>();
  };
  const double fd = (loss_at(eta0 + h * dir) - loss_at(eta0 - h * dir)) / (2 * h);
  const double analytic = (g.grad * dir).sum().item<double>();
  CHECK(fd == doctest::Approx(analytic).epsilon(0.05));
  CHECK(analytic > 0.0);
}

TEST_CASE("run_attack_step with alpha = 0 is the plain reverse step") {
  Fixture f;
  auto ctx = f.ctx();
  AttackConfig cfg;
  cfg.alpha = 0.0;
  AttackState st;
  auto out = run_attack_step(ctx, st, cfg);
  torch::Tensor ref;
  {
    torch::NoGradGuard ng;
    ref = emit_step(ctx, torch::zeros_like(f.x_t));
  }
  CHECK(torch::equal(out, ref));
  CHECK(st.eta.abs().max().item<double>() == 0.0);
  REQUIRE(st.traces.size() == 2);
  CHECK(st.traces[0].size() == 1);
  CHECK(st.traces[0][0].loss_before == st.traces[0][0].loss_after);
}

TEST_CASE("run_attack_step: K inner steps bound eta, confine it to the region and lower the loss") {
  Fixture f;
  auto ctx = f.ctx();
  AttackConfig cfg;
  cfg.alpha = 0.01;
  cfg.inner_iters = 2;
  AttackState st;
  run_attack_step(ctx, st, cfg);
  CHECK(st.eta.abs().max().item<double>() <= 2 * 0.01 + 1e-7);
  CHECK((st.eta * (1 - f.mask)).abs().max().item<double>() == 0.0);
  for (const auto& tr : st.traces) {
    CHECK(tr[0].eta_inf == doctest::Approx(0.02));
    CHECK(tr[0].loss_after < tr[0].loss_before);
    CHECK(!tr[0].skipped);
  }
}

TEST_CASE("run_attack_step: reset vs persist eta across steps") {
  Fixture f(1);
  AttackConfig cfg;
  cfg.alpha = 0.01;
  AttackState reset_state;
  run_attack_step(f.ctx(3), reset_state, cfg);
  run_attack_step(f.ctx(2), reset_state, cfg);
  CHECK(reset_state.eta.abs().max().item<double>() <= 0.01 + 1e-7);

  cfg.eta_mode = EtaMode::kPersist;
  AttackState keep;
  run_attack_step(f.ctx(3), keep, cfg);
  auto eta1 = keep.eta.clone();
  auto expected = dada_update(eta1, attack_gradient(f.ctx(2), eta1).grad, 0.01);
  run_attack_step(f.ctx(2), keep, cfg);
  CHECK(torch::equal(keep.eta, expected));
}

TEST_CASE("run_attack_step: outside the window no attack happens") {
  Fixture f;
  AttackConfig cfg;
  cfg.window = std::pair{1, 2};
  AttackState st;
  auto out = run_attack_step(f.ctx(3), st, cfg);
  CHECK(st.eta.abs().max().item<double>() == 0.0);
  torch::NoGradGuard ng;
  CHECK(torch::equal(out, emit_step(f.ctx(3), torch::zeros_like(f.x_t))));
}

TEST_CASE("run_attack_step: a detector without candidates skips the attack") {
  Fixture f;
  StubDetector none({}, {});
  auto ctx = f.ctx();
  StepContext c2{ctx.denoiser, none, ctx.schedule, ctx.t, ctx.x_real_t, ctx.x_t, ctx.region_mask, ctx.regions,
                 ctx.eps_fixed};
  AttackState st;
  auto out = run_attack_step(c2, st, AttackConfig{});
  CHECK(st.traces[0][0].skipped);
  torch::NoGradGuard ng;
  CHECK(torch::equal(out, emit_step(c2, torch::zeros_like(f.x_t))));
}

TEST_CASE("attack leaves denoiser and detector parameters untouched") {
  Fixture f;
  ToyDetector det;
  std::vector<torch::Tensor> before_det, before_den;
  for (const auto& p : det.parameters()) before_det.push_back(p.detach().clone());
  for (const auto& p : f.den.net()->parameters()) before_den.push_back(p.detach().clone());
  auto ctx = f.ctx();
  StepContext c2{ctx.denoiser, det, ctx.schedule, ctx.t, ctx.x_real_t, ctx.x_t, ctx.region_mask, ctx.regions,
                 ctx.eps_fixed};
  AttackConfig cfg;
  cfg.inner_iters = 3;
  AttackState st;
  run_attack_step(c2, st, cfg);
  auto params = det.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    CHECK(torch::equal(params[i], before_det[i]));
    CHECK(!params[i].grad().defined());
  }
  auto dp = f.den.net()->parameters();
  for (std::size_t i = 0; i < dp.size(); ++i) CHECK(torch::equal(dp[i], before_den[i]));
}

TEST_CASE("write_attack_trace: one line per step plus header") {
  std::vector<StepTrace> tr{{3, 1.0, 0.5, 0.01, false}, {2, 0.5, 0.4, 0.01, true}};
  auto path = std::filesystem::temp_directory_path() / "dada_trace_test.txt";
  write_attack_trace(tr, path.string());
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 3);
  CHECK(lines[0][0] == '#');
  CHECK(lines[1].rfind("3 1 0.5 0.01", 0) == 0);
  CHECK(lines[2].find("skipped") != std::string::npos);
  std::filesystem::remove(path);
}
