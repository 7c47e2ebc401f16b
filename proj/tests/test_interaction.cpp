#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mfg/interaction.hpp"
#include "mfg/params.hpp"
#include "mfg/rng.hpp"

using namespace mfg;

namespace {

ModelParams valid_params() {
  Scenario s = default_scenario();
  return s.model;
}

EmpiricalMeasure random_cloud(std::size_t n, std::uint64_t seed, double zero_h_fraction = 0.0) {
  EmpiricalMeasure mu;
  rng::Key key(seed);
  for (std::size_t i = 0; i < n; ++i) {
    mu.x.push_back(4.0 * rng::uniform(key, 3 * i) - 2.0);
    bool zero = rng::uniform(key, 3 * i + 1) < zero_h_fraction;
    mu.h.push_back(zero ? 0.0 : 2.0 * rng::uniform(key, 3 * i + 2));
    mu.w.push_back(1.0 / static_cast<double>(n));
  }
  return mu;
}

// Direct N-term sums, no shared kernels helpers.
double naive_F(const ModelParams& p, const EmpiricalMeasure& mu, double x) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    double r = std::abs(x - mu.x[i]);
    num += mu.w[i] * kernel_eval(p.kernel1, r) * mu.h[i];
    den += mu.w[i] * kernel_eval(p.kernel2, r);
  }
  return num == 0.0 ? 0.0 : num / den;
}

}  // namespace

TEST_CASE("kernel brackets match direct sums") {
  ModelParams p = valid_params();
  EmpiricalMeasure mu = random_cloud(64, 11);
  for (int i = 0; i <= 20; ++i) {
    double x = -3.0 + 6.0 * i / 20.0;
    double b1 = 0.0, b2 = 0.0;
    for (std::size_t k = 0; k < mu.size(); ++k) {
      b1 += mu.w[k] * kernel_eval(p.kernel1, std::abs(x - mu.x[k])) * mu.h[k];
      b2 += mu.w[k] * kernel_eval(p.kernel2, std::abs(x - mu.x[k]));
    }
    REQUIRE(bracket_b1(p, mu, x) == doctest::Approx(b1).epsilon(1e-14));
    REQUIRE(bracket_b2(p, mu, x) == doctest::Approx(b2).epsilon(1e-14));
    REQUIRE(interaction_F(p, mu, x) == doctest::Approx(naive_F(p, mu, x)).epsilon(1e-14));
  }
}

TEST_CASE("F vanishes exactly on zero-capital populations") {
  ModelParams p = valid_params();
  EmpiricalMeasure mu = random_cloud(32, 12, 1.0);
  REQUIRE(moment_M(mu) == 0.0);
  for (int i = -5; i <= 5; ++i) REQUIRE(interaction_F(p, mu, 0.4 * i) == 0.0);
}

TEST_CASE("F respects the kernel-ratio bounds around M") {
  ModelParams p = valid_params();
  for (int trial = 0; trial < 50; ++trial) {
    EmpiricalMeasure mu = random_cloud(48, 100 + trial, trial % 3 == 0 ? 0.4 : 0.0);
    double M = moment_M(mu);
    auto rep = f_bounds_check(p, mu);
    CAPTURE(trial);
    REQUIRE(rep.ok);
    REQUIRE(rep.lower == doctest::Approx(p.theta_lo / p.theta_hi * M));
    REQUIRE(rep.upper == doctest::Approx(p.theta_hi / p.theta_lo * M));
  }
}

TEST_CASE("single-atom measure gives F equal to kernel ratio times h") {
  ModelParams p = valid_params();
  EmpiricalMeasure mu;
  mu.x = {0.3};
  mu.h = {1.4};
  mu.w = {1.0};
  double x = -0.9;
  double r = std::abs(x - 0.3);
  double expect = kernel_eval(p.kernel1, r) * 1.4 / kernel_eval(p.kernel2, r);
  REQUIRE(interaction_F(p, mu, x) == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("x-Lipschitz constant dominates sampled difference quotients") {
  ModelParams p = valid_params();
  for (int trial = 0; trial < 10; ++trial) {
    EmpiricalMeasure mu = random_cloud(32, 500 + trial);
    double L = f_lipschitz_x_constant(p, mu);
    rng::Key key(rng::combine(9000, trial));
    for (int i = 0; i < 2000; ++i) {
      double x1 = -4.0 + 8.0 * rng::uniform(key, 2 * i);
      double x2 = -4.0 + 8.0 * rng::uniform(key, 2 * i + 1);
      double dF = interaction_F(p, mu, x1) - interaction_F(p, mu, x2);
      REQUIRE(std::abs(dF) <= L * std::abs(x1 - x2) + 1e-12);
    }
  }
}

TEST_CASE("mu-Lipschitz constant dominates atom-perturbation quotients") {
  ModelParams p = valid_params();
  for (int trial = 0; trial < 20; ++trial) {
    EmpiricalMeasure mu = random_cloud(24, 700 + trial);
    EmpiricalMeasure nu = mu;
    rng::Key key(rng::combine(7100, trial));
    for (std::size_t i = 0; i < nu.size(); ++i) {
      nu.x[i] += 0.2 * (rng::uniform(key, 2 * i) - 0.5);
      nu.h[i] = std::max(0.0, nu.h[i] + 0.2 * (rng::uniform(key, 2 * i + 1) - 0.5));
    }
    // Identity pairing of equal-weight atoms upper-bounds W2.
    double coupling2 = 0.0;
    for (std::size_t i = 0; i < nu.size(); ++i)
      coupling2 += mu.w[i] * ((mu.x[i] - nu.x[i]) * (mu.x[i] - nu.x[i]) +
                              (mu.h[i] - nu.h[i]) * (mu.h[i] - nu.h[i]));
    double w2 = wasserstein2(mu, nu);
    REQUIRE(w2 <= std::sqrt(coupling2) + 1e-12);
    double L = std::max(f_lipschitz_mu_constant(p, mu), f_lipschitz_mu_constant(p, nu));
    for (int i = -4; i <= 4; ++i) {
      double x = 0.5 * i;
      REQUIRE(std::abs(interaction_F(p, mu, x) - interaction_F(p, nu, x)) <=
              L * w2 + 1e-10);
    }
  }
}

TEST_CASE("FContext interpolation tracks the exact kernel sums") {
  ModelParams p = valid_params();
  EmpiricalMeasure mu = random_cloud(96, 13);
  FContext ctx(p, mu, -3.0, 3.0, 512);
  REQUIRE(ctx.M() == doctest::Approx(moment_M(mu)).epsilon(1e-14));
  double worst = 0.0;
  for (int i = 0; i <= 300; ++i) {
    double x = -3.0 + 6.0 * i / 300.0;
    worst = std::max(worst, std::abs(ctx.F(x) - interaction_F(p, mu, x)));
  }
  REQUIRE(worst <= 1e-4);
  // Clamped beyond the table ends.
  REQUIRE(ctx.F(-10.0) == doctest::Approx(ctx.F(-3.0)));
  REQUIRE(ctx.F(10.0) == doctest::Approx(ctx.F(3.0)));
}

TEST_CASE("FlowFContext matches per-time contexts") {
  ModelParams p = valid_params();
  MeasureFlow flow;
  flow.times = {0.0, 0.1, 0.2};
  for (int k = 0; k < 3; ++k) flow.measures.push_back(random_cloud(40, 4000 + k));
  FlowFContext fctx(p, flow);
  REQUIRE(fctx.size() == 3);
  for (std::size_t k = 0; k < 3; ++k)
    for (int i = -4; i <= 4; ++i) {
      double x = 0.45 * i;
      REQUIRE(fctx.at(k).F(x) ==
              doctest::Approx(interaction_F(p, flow.measures[k], x)).epsilon(2e-4));
    }
}
