#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "mfg/params.hpp"
#include "mfg/rng.hpp"

using namespace mfg;

namespace {

ModelParams basic_params() {
  ModelParams p;
  p.sigma = 0.5;
  p.gamma = 0.5;
  p.kernel1 = {1.0, 2.0, 1.0};
  p.kernel2 = {1.0, 2.0, 1.0};
  p.zeta = p.chi = p.eps = p.rho = 0.1;
  return p;
}

}  // namespace

TEST_CASE("validate fills eta from gamma and sigma") {
  ModelParams p = basic_params();
  auto errs = validate(p);
  REQUIRE(errs.empty());
  REQUIRE(p.eta_exp == doctest::Approx(0.25).epsilon(1e-15));
  REQUIRE(p.theta_lo == doctest::Approx(1.0));
  REQUIRE(p.theta_hi == doctest::Approx(2.0));
}

TEST_CASE("validate rejects sigma outside (0,1)") {
  ModelParams p = basic_params();
  p.sigma = 1.2;
  auto errs = validate(p);
  REQUIRE(!errs.empty());
  bool found = false;
  for (const auto& e : errs) found = found || e.find("sigma") != std::string::npos;
  REQUIRE(found);
}

TEST_CASE("validate rejects zero kernel floor") {
  ModelParams p = basic_params();
  p.kernel1.floor = 0.0;
  auto errs = validate(p);
  REQUIRE(!errs.empty());
  bool found = false;
  for (const auto& e : errs) found = found || e.find("kernel") != std::string::npos;
  REQUIRE(found);
}

TEST_CASE("validate rejects control box without zero") {
  ModelParams p = basic_params();
  p.control_box = {0.1, 0.5};
  REQUIRE(!validate(p).empty());
}

TEST_CASE("validate is idempotent") {
  ModelParams p = basic_params();
  REQUIRE(validate(p).empty());
  ModelParams q = p;
  REQUIRE(validate(q).empty());
  REQUIRE(q.eta_exp == p.eta_exp);
  REQUIRE(q.L_f == p.L_f);
  REQUIRE(q.L_A == p.L_A);
  REQUIRE(q.L_eta1 == p.L_eta1);
  REQUIRE(q.A_lo == p.A_lo);
  REQUIRE(q.A_hi == p.A_hi);
  REQUIRE(q.B_bar == p.B_bar);
}

TEST_CASE("kernel range and analytic Lipschitz constant") {
  KernelSpec k{0.7, 1.9, 0.8};
  double max_slope = 0.0;
  for (int i = 0; i < 20000; ++i) {
    double r = 5.0 * i / 19999.0;
    double v = kernel_eval(k, r);
    REQUIRE(v >= k.floor - 1e-15);
    REQUIRE(v <= k.cap + 1e-15);
    if (i > 0) {
      double prev = kernel_eval(k, 5.0 * (i - 1) / 19999.0);
      max_slope = std::max(max_slope, std::abs(v - prev) / (5.0 / 19999.0));
    }
  }
  // The analytic constant (cap-floor)*sqrt(2/e)/length dominates every
  // sampled difference quotient and is attained at r = length/sqrt(2).
  REQUIRE(max_slope <= kernel_lipschitz(k) + 1e-9);
  REQUIRE(max_slope == doctest::Approx(kernel_lipschitz(k)).epsilon(1e-4));
}

TEST_CASE("production built-ins satisfy the standing assumptions") {
  for (auto kind : {ProductionSpec::Kind::Linear, ProductionSpec::Kind::Saturating}) {
    ProductionSpec f;
    f.kind = kind;
    f.beta = 1.7;
    f.h_sat = 0.6;
    REQUIRE(production_eval(f, 0.0) == 0.0);
    double L = production_lipschitz(f);
    rng::Key key(7);
    for (int i = 0; i < 10000; ++i) {
      double h1 = 10.0 * rng::uniform(key, 2 * i);
      double h2 = 10.0 * rng::uniform(key, 2 * i + 1);
      double df = production_eval(f, h1) - production_eval(f, h2);
      if (h1 < h2) REQUIRE(df <= 1e-15);  // nondecreasing
      REQUIRE(std::abs(df) <= L * std::abs(h1 - h2) + 1e-12);
    }
  }
}

TEST_CASE("amenity stays inside its bounds with the stated slope") {
  AmenitySpec a{0.5, 2.5, 1.3};
  double L = amenity_lipschitz(a);
  REQUIRE(L == doctest::Approx((a.hi - a.lo) / (2.0 * a.length)));
  for (int i = 0; i <= 4000; ++i) {
    double x = -20.0 + 40.0 * i / 4000.0;
    double v = amenity_eval(a, x);
    REQUIRE(v >= a.lo - 1e-15);
    REQUIRE(v <= a.hi + 1e-15);
  }
  rng::Key key(8);
  for (int i = 0; i < 10000; ++i) {
    double x1 = -20.0 + 40.0 * rng::uniform(key, 2 * i);
    double x2 = -20.0 + 40.0 * rng::uniform(key, 2 * i + 1);
    REQUIRE(std::abs(amenity_eval(a, x1) - amenity_eval(a, x2)) <=
            L * std::abs(x1 - x2) + 1e-12);
  }
}

TEST_CASE("movement cost is zero at rest and strictly convex") {
  CostSpec c{2.0, 2};  // a(v) = 2 v^4
  REQUIRE(cost_eval(c, 0.0) == 0.0);
  REQUIRE(cost_eval(c, 0.5) == doctest::Approx(2.0 * 0.0625));
  rng::Key key(9);
  for (int i = 0; i < 2000; ++i) {
    double u = -1.0 + 2.0 * rng::uniform(key, 2 * i);
    double v = -1.0 + 2.0 * rng::uniform(key, 2 * i + 1);
    if (std::abs(u - v) < 1e-6) continue;
    double mid = cost_eval(c, 0.5 * (u + v));
    REQUIRE(mid < 0.5 * (cost_eval(c, u) + cost_eval(c, v)));
  }
}

TEST_CASE("default scenario validates and has a positive admissible horizon") {
  Scenario s = default_scenario();
  auto errs = validate(s.model);
  REQUIRE(errs.empty());
  REQUIRE(s.model.eta_exp == doctest::Approx(0.25));
  REQUIRE(s.model.horizon > 0.0);
  REQUIRE(check_numerics(s.numerics).empty());
}

TEST_CASE("config round-trips through text") {
  Scenario s = default_scenario();
  s.model.rho = 0.17;
  s.model.f_spec.kind = ProductionSpec::Kind::Linear;
  s.numerics.n_particles = 321;
  s.numerics.seed = 987654321u;
  s.numerics.mu0.zero_mass = 0.25;
  std::string text = config_to_text(s);
  std::vector<std::string> errs;
  Scenario t = parse_config(text, &errs);
  REQUIRE(errs.empty());
  REQUIRE(t.model.rho == s.model.rho);
  REQUIRE(t.model.f_spec.kind == s.model.f_spec.kind);
  REQUIRE(t.numerics.n_particles == s.numerics.n_particles);
  REQUIRE(t.numerics.seed == s.numerics.seed);
  REQUIRE(t.numerics.mu0.zero_mass == s.numerics.mu0.zero_mass);
  REQUIRE(t.model.horizon == s.model.horizon);
}

TEST_CASE("config parser reports unknown keys and bad numbers") {
  std::vector<std::string> errs;
  parse_config("rho = 0.1\nnot_a_key = 3\n", &errs);
  REQUIRE(!errs.empty());
  errs.clear();
  parse_config("rho = banana\n", &errs);
  REQUIRE(!errs.empty());
}

TEST_CASE("config parser ignores comments and blank lines") {
  std::vector<std::string> errs;
  Scenario s = parse_config("# a comment\n\nrho = 0.42 # trailing\n", &errs);
  REQUIRE(errs.empty());
  REQUIRE(s.model.rho == doctest::Approx(0.42));
}
