#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "doctest.h"
#include "mfg/dynamics.hpp"
#include "mfg/hamiltonian.hpp"
#include "mfg/hjb.hpp"
#include "mfg/interaction.hpp"
#include "mfg/measures.hpp"
#include "mfg/params.hpp"
#include "mfg/util.hpp"

using namespace mfg;

namespace {

GradientFn zero_grads() {
  return [](double, double, double) { return Gradients{0.0, 0.0}; };
}

Scenario small_scenario() {
  Scenario sc = default_scenario();
  sc.numerics.n_particles = 300;
  sc.numerics.n_time = 64;
  sc.numerics.grid.n_x = 48;
  sc.numerics.grid.n_y = 32;
  return sc;
}

MeasureFlow small_flow(const Scenario& sc) {
  ParticleEnsemble e0 = sample_initial(sc.numerics.mu0, sc.numerics.n_particles,
                                       sc.numerics.seed);
  return simulate_mkv(e0, zero_grads(), sc.model, sc.numerics);
}

}  // namespace

TEST_CASE("value field satisfies terminal condition, sign and monotonicity") {
  Scenario sc = small_scenario();
  MeasureFlow flow = small_flow(sc);
  ValueField vf = solve_hjb(flow, sc.model, sc.numerics);

  REQUIRE(vf.n_time == sc.numerics.n_time);
  REQUIRE(vf.T == doctest::Approx(sc.model.horizon).epsilon(1e-15));
  REQUIRE(vf.negative_nodes == 0);
  REQUIRE(vf.monotonicity_nodes == 0);

  const int nx = vf.grid.n_x, ny = vf.grid.n_y;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j)
      REQUIRE(vf.w[vf.idx(vf.n_time, i, j)] == 0.0);  // w(T, ., .) = 0 exactly

  double w_max = 0.0;
  for (double w : vf.w) {
    REQUIRE(w >= 0.0);
    REQUIRE(std::isfinite(w));
    w_max = std::max(w_max, w);
  }
  REQUIRE(w_max > 0.0);  // the economy is not degenerate

  // Value decreases towards the horizon (less remaining utility).
  NeumaierSum s0, s_mid;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      s0.add(vf.w[vf.idx(0, i, j)]);
      s_mid.add(vf.w[vf.idx(vf.n_time / 2, i, j)]);
    }
  REQUIRE(s0.value() > s_mid.value());
}

TEST_CASE("zero-capital population yields an identically zero value") {
  Scenario sc = small_scenario();
  sc.numerics.mu0.zero_mass = 1.0;
  MeasureFlow flow = small_flow(sc);
  ValueField vf = solve_hjb(flow, sc.model, sc.numerics);
  // F = 0 everywhere, so running utility vanishes; staying put costs nothing
  // and capital only decays, so w = 0 solves the equation.
  double w_max = 0.0;
  for (double w : vf.w) w_max = std::max(w_max, std::abs(w));
  REQUIRE(w_max <= 1e-12);
}

TEST_CASE("CFL violation reports the required time resolution") {
  Scenario sc = small_scenario();
  sc.numerics.n_time = 2;
  sc.numerics.grid.n_x = 512;  // fine spatial grid + coarse time step
  ParticleEnsemble e0 = sample_initial(sc.numerics.mu0, sc.numerics.n_particles, 1);
  MeasureFlow flow = simulate_mkv(e0, zero_grads(), sc.model, sc.numerics);
  try {
    solve_hjb(flow, sc.model, sc.numerics);
    REQUIRE(false);
  } catch (const std::runtime_error& ex) {
    const std::string msg = ex.what();
    CAPTURE(msg);
    REQUIRE(msg.find("n_time") != std::string::npos);
    REQUIRE(msg.find("CFL") != std::string::npos);
  }
}

TEST_CASE("interpolation reproduces nodes and counts hull clamping") {
  Scenario sc = small_scenario();
  MeasureFlow flow = small_flow(sc);
  ValueField vf = solve_hjb(flow, sc.model, sc.numerics);

  for (int k : {0, vf.n_time / 3, vf.n_time}) {
    for (int i : {0, vf.grid.n_x / 2, vf.grid.n_x - 1}) {
      for (int j : {0, vf.grid.n_y / 2, vf.grid.n_y - 1}) {
        const double t = vf.t_at(k), x = vf.x_at(i), h = std::exp(vf.y_at(j));
        REQUIRE(vf.value(t, x, h) ==
                doctest::Approx(vf.w[vf.idx(k, i, j)]).epsilon(1e-12));
        const Gradients g = vf.gradients(t, x, h);
        // D_xV = d_x w, D_hV = d_y w / h under the log transform.
        REQUIRE(g.dx == doctest::Approx(vf.dxw[vf.idx(k, i, j)]).epsilon(1e-10));
        REQUIRE(g.dh ==
                doctest::Approx(vf.dyw[vf.idx(k, i, j)] / h).epsilon(1e-10));
      }
    }
  }

  // Midpoint values stay within the bracketing node values in each axis.
  const double tm = 0.5 * (vf.t_at(3) + vf.t_at(4));
  const double xm = 0.5 * (vf.x_at(5) + vf.x_at(6));
  const double hm = std::exp(0.5 * (vf.y_at(7) + vf.y_at(8)));
  double lo = 1e300, hi = -1e300;
  for (int k : {3, 4})
    for (int i : {5, 6})
      for (int j : {7, 8}) {
        lo = std::min(lo, vf.w[vf.idx(k, i, j)]);
        hi = std::max(hi, vf.w[vf.idx(k, i, j)]);
      }
  const double vm = vf.value(tm, xm, hm);
  REQUIRE(vm >= lo - 1e-12);
  REQUIRE(vm <= hi + 1e-12);

  const long long before = vf.clamped_queries;
  (void)vf.value(0.0, vf.grid.x_max + 5.0, 1.0);
  (void)vf.gradients(0.0, 0.0, std::exp(vf.grid.y_min) / 100.0);
  REQUIRE(vf.clamped_queries >= before + 2);

  auto gf = gradient_fn(std::make_shared<ValueField>(vf));
  const Gradients a = gf(0.01, 0.2, 0.1);
  const Gradients b = vf.gradients(0.01, 0.2, 0.1);
  REQUIRE(a.dx == b.dx);
  REQUIRE(a.dh == b.dh);
}

TEST_CASE("feedback policy reads off the Hamiltonian maximizers") {
  Scenario sc = small_scenario();
  auto flow = std::make_shared<MeasureFlow>(small_flow(sc));
  auto vf = std::make_shared<const ValueField>(solve_hjb(*flow, sc.model, sc.numerics));
  auto fctx = std::make_shared<const FlowFContext>(sc.model, *flow);
  Policy pol = feedback_policy(vf, flow, sc.model, fctx);

  const double dtf = flow->times[1] - flow->times[0];
  for (double t : {0.0, 0.3 * sc.model.horizon, 0.9 * sc.model.horizon}) {
    for (double x : {-0.4, 0.0, 0.7}) {
      for (double h : {0.05, 0.1, 0.4}) {
        const Control c = pol(t, x, h);
        const Gradients g = vf->gradients(t, x, h);
        const std::size_t k = std::min(
            fctx->size() - 1,
            static_cast<std::size_t>(std::max(0.0, std::round(t / dtf))));
        REQUIRE(c.v == dpH0(sc.model, g.dx));
        REQUIRE(c.s == s_bar(sc.model, x, h, fctx->at(k).F(x), g.dh));
        REQUIRE(c.v >= sc.model.control_box.v_lo);
        REQUIRE(c.v <= sc.model.control_box.v_hi);
        REQUIRE(c.s >= 0.0);
        REQUIRE(c.s <= 1.0);
      }
    }
  }
}

TEST_CASE("Monte Carlo value matches the closed form for a frozen path cost") {
  Scenario sc = small_scenario();
  MeasureFlow flow = small_flow(sc);
  // h0 = 0: utility vanishes along every path, so the objective is the
  // deterministic discounted travel cost of the fixed velocity.
  const double v = 0.3;
  Policy fixed = [v](double, double, double) { return Control{v, 0.0}; };
  McValue mc = mc_value(0, 0.0, 0.0, flow, fixed, sc.model, 64, 9);
  REQUIRE(mc.std_error == 0.0);

  const double cost = cost_eval(sc.model.cost_spec, v);
  NeumaierSum trap;
  const std::size_t nt = flow.size();
  for (std::size_t k = 0; k < nt; ++k) {
    const double wgt = (k == 0 || k == nt - 1) ? 0.5 : 1.0;
    trap.add(-wgt * cost * std::exp(-sc.model.rho * flow.times[k]));
  }
  const double dt = flow.times[1] - flow.times[0];
  REQUIRE(mc.estimate == doctest::Approx(trap.value() * dt).epsilon(1e-12));
  const double exact = -cost * (1.0 - std::exp(-sc.model.rho * sc.model.horizon)) /
                       sc.model.rho;
  REQUIRE(mc.estimate == doctest::Approx(exact).epsilon(1e-3));
}

TEST_CASE("Monte Carlo value is deterministic with shrinking standard error") {
  Scenario sc = small_scenario();
  MeasureFlow flow = small_flow(sc);
  auto vf = std::make_shared<const ValueField>(solve_hjb(flow, sc.model, sc.numerics));
  auto flow_p = std::make_shared<MeasureFlow>(flow);
  Policy pol = feedback_policy(vf, flow_p, sc.model);

  McValue a = mc_value(0, 0.0, 0.1, flow, pol, sc.model, 256, 41);
  McValue b = mc_value(0, 0.0, 0.1, flow, pol, sc.model, 256, 41);
  REQUIRE(a.estimate == b.estimate);
  REQUIRE(a.std_error == b.std_error);
  REQUIRE(a.std_error > 0.0);

  McValue big = mc_value(0, 0.0, 0.1, flow, pol, sc.model, 1024, 41);
  REQUIRE(big.std_error < a.std_error);
  REQUIRE(big.std_error == doctest::Approx(a.std_error / 2.0).epsilon(0.35));
  // The policy value is consistent with the PDE value up to MC + grid error.
  REQUIRE(std::abs(big.estimate - vf->value(0.0, 0.0, 0.1)) <
          5.0 * big.std_error + 0.05);
}

TEST_CASE("value field dump writes one slice per time plus an index") {
  Scenario sc = small_scenario();
  sc.numerics.n_time = 16;
  sc.numerics.grid.n_x = 16;
  sc.numerics.grid.n_y = 12;
  MeasureFlow flow = small_flow(sc);
  ValueField vf = solve_hjb(flow, sc.model, sc.numerics);

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "vf_dump_test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  save_value_field(vf, dir.string());

  REQUIRE(fs::exists(dir / "index.csv"));
  std::size_t slices = 0;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().filename() != "index.csv") ++slices;
  REQUIRE(slices == static_cast<std::size_t>(vf.n_time + 1));

  // Each slice holds one row per grid node plus a header.
  std::ifstream in(dir / "index.csv");
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);  // header
  std::getline(in, line);
  REQUIRE(!line.empty());
  fs::remove_all(dir);
}
