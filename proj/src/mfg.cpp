#include "mfg/mfg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>

#include "json.hpp"
#include "mfg/hamiltonian.hpp"
#include "mfg/rng.hpp"
#include "mfg/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mfg {

namespace {

double grad_bound_on_grid(const ValueField& vf) {
  double worst = 0.0;
  for (int k = 0; k <= vf.n_time; ++k)
    for (int i = 0; i < vf.grid.n_x; ++i)
      for (int j = 0; j < vf.grid.n_y; ++j) {
        // |D_xV| + |h D_hV| with h D_hV = d_y w
        const double v = std::abs(vf.dxw[vf.idx(k, i, j)]) +
                         std::abs(vf.dyw[vf.idx(k, i, j)]);
        worst = std::max(worst, v);
      }
  return worst;
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::pair<MeasureFlow, ValueField> psi_map(const MeasureFlow& mu_flow,
                                           const ParticleEnsemble& ensemble0,
                                           const ModelParams& params,
                                           const NumericsParams& numerics) {
  ValueField vf = solve_hjb(mu_flow, params, numerics);
  auto shared = std::make_shared<ValueField>(std::move(vf));
  MeasureFlow out = simulate_mkv(ensemble0, gradient_fn(shared), params, numerics);
  return {std::move(out), std::move(*shared)};
}

MeasureFlow mix_flows(double lambda, const MeasureFlow& a, const MeasureFlow& b,
                      std::size_t n_atoms, std::uint64_t seed) {
  check_flow(a);
  check_flow(b);
  if (a.size() != b.size()) throw std::invalid_argument("mix_flows: grids differ");
  if (!(lambda > 0.0 && lambda <= 1.0))
    throw std::invalid_argument("mix weight must be in (0,1]");
  MeasureFlow out;
  out.times = a.times;
  out.measures.resize(a.size());
  out.measures[0] = a.measures[0];  // both flows start at mu0
  parallel_for(1, a.size(), [&](std::size_t k) {
    EmpiricalMeasure u;
    const EmpiricalMeasure& ma = a.measures[k];
    const EmpiricalMeasure& mb = b.measures[k];
    u.x.reserve(ma.size() + mb.size());
    for (std::size_t i = 0; i < ma.size(); ++i) {
      u.x.push_back(ma.x[i]);
      u.h.push_back(ma.h[i]);
      u.w.push_back(lambda * ma.w[i]);
    }
    for (std::size_t i = 0; i < mb.size(); ++i) {
      u.x.push_back(mb.x[i]);
      u.h.push_back(mb.h[i]);
      u.w.push_back((1.0 - lambda) * mb.w[i]);
    }
    out.measures[k] = subsample(u, n_atoms, rng::combine(seed, k));
  });
  return out;
}

MfgSolution solve_mfg(const ParticleEnsemble& ensemble0, const ModelParams& params,
                      const NumericsParams& numerics) {
  const double t_start = now_seconds();
  MfgSolution sol;
  FixedPointReport& rep = sol.report;
  const EmpiricalMeasure mu0 = ensemble0.measure();
  rep.constants = horizon_constants(mu0, params);

  if (!rep.constants.t_max_infinite && params.horizon > rep.constants.T_max) {
    rep.horizon_violation = true;
    rep.verdict = "horizon violation";
    rep.total_wall_seconds = now_seconds() - t_start;
    return sol;
  }

  const std::uint64_t mix_seed = rng::label_seed(numerics.seed, "mix");
  const std::uint64_t dist_seed = rng::label_seed(numerics.seed, "flow-distance");

  // Constant-in-time initial guess, pushed once through Psi to obtain the
  // starting iterate (the push is initialization, not an iteration).
  MeasureFlow const_flow;
  const int nt = numerics.n_time;
  const_flow.times.resize(nt + 1);
  const_flow.measures.assign(nt + 1, mu0);
  for (int k = 0; k <= nt; ++k) const_flow.times[k] = params.horizon * k / nt;

  auto [iterate, value0] = psi_map(const_flow, ensemble0, params, numerics);
  sol.value = std::move(value0);

  bool converged = false;
  for (int it = 1; it <= numerics.max_iter && !converged; ++it) {
    const double t_it = now_seconds();
    auto [psi_flow, vf] = psi_map(iterate, ensemble0, params, numerics);
    IterationStats st;
    st.gap = flow_distance(psi_flow, iterate, dist_seed);
    st.membership = q_membership(psi_flow, mu0, rep.constants.K1, rep.constants.K2,
                                 rng::combine(dist_seed, static_cast<std::uint64_t>(it)));
    const EmpiricalMeasure& last = psi_flow.measures.back();
    st.M_final = moment_M(last);
    st.M2_final = moment_M2(last);
    for (const auto& m : psi_flow.measures) st.P2_max = std::max(st.P2_max, moment_P2(m));
    st.grad_bound = grad_bound_on_grid(vf);
    st.wall_seconds = now_seconds() - t_it;
    rep.iterations.push_back(st);

    if (st.gap <= numerics.tol_fp) {
      converged = true;
      rep.self_map_residual = st.gap;
      sol.flow = std::move(psi_flow);
      sol.value = std::move(vf);
    } else {
      iterate = mix_flows(numerics.damping, psi_flow, iterate, ensemble0.size(),
                          rng::combine(mix_seed, static_cast<std::uint64_t>(it)));
      sol.value = std::move(vf);
      if (it == numerics.max_iter) sol.flow = std::move(psi_flow);
    }
  }
  rep.verdict = converged ? "converged" : "not converged";
  if (converged) rep.exploitability = exploitability(sol.flow, sol.value, params, numerics);
  rep.total_wall_seconds = now_seconds() - t_start;
  return sol;
}

ExploitabilityReport exploitability(const MeasureFlow& mu_flow, const ValueField& value,
                                    const ModelParams& params,
                                    const NumericsParams& numerics) {
  ExploitabilityReport rep;
  auto vf = std::make_shared<const ValueField>(value);
  auto flow = std::make_shared<const MeasureFlow>(mu_flow);
  auto fctx = std::make_shared<const FlowFContext>(params, mu_flow);
  const Policy fb = feedback_policy(vf, flow, params, fctx);
  const int n_paths = std::max(200, numerics.mc_paths / 4);
  const std::uint64_t seed = rng::label_seed(numerics.seed, "exploitability");

  // Probe initial states: interior x, capital spanning the bulk of mu0.
  std::vector<std::pair<double, double>> probes;
  {
    const EmpiricalMeasure& m0 = mu_flow.measures.front();
    std::vector<double> hs;
    for (double h : m0.h)
      if (h > 0.0) hs.push_back(h);
    if (hs.empty()) hs.push_back(0.0);
    std::sort(hs.begin(), hs.end());
    const double h_lo = hs[hs.size() / 4], h_hi = hs[(3 * hs.size()) / 4];
    for (double x : {-0.5, 0.5})
      for (double h : {h_lo, h_hi}) probes.emplace_back(x, h);
  }

  struct Challenger {
    std::string name;
    Policy policy;
  };
  std::vector<Challenger> challengers;
  // 8 x 5 grid of constant controls
  for (int iv = 0; iv < 8; ++iv)
    for (int is = 0; is < 5; ++is) {
      const double v = params.control_box.v_lo +
                       (params.control_box.v_hi - params.control_box.v_lo) * iv / 7.0;
      const double s = is / 4.0;
      challengers.push_back({"const v=" + format_g17(v) + " s=" + format_g17(s),
                             [v, s](double, double, double) { return Control{v, s}; }});
    }
  // 16 random piecewise-constant (in time) policies
  rng::Key key(rng::label_seed(seed, "challengers"));
  for (int r = 0; r < 16; ++r) {
    const double T = mu_flow.times.back();
    std::vector<double> vs(4), ss(4);
    for (int q = 0; q < 4; ++q) {
      vs[q] = params.control_box.v_lo +
              (params.control_box.v_hi - params.control_box.v_lo) *
                  rng::uniform(key.with(static_cast<std::uint64_t>(r)), 2 * q);
      ss[q] = rng::uniform(key.with(static_cast<std::uint64_t>(r)), 2 * q + 1);
    }
    challengers.push_back(
        {"piecewise-" + std::to_string(r), [vs, ss, T](double t, double, double) {
           const int q = std::min(3, static_cast<int>(4.0 * t / T));
           return Control{vs[q], ss[q]};
         }});
  }

  rep.gap = -1e300;
  for (std::size_t pi = 0; pi < probes.size(); ++pi) {
    const auto [x0, h0] = probes[pi];
    const McValue base = mc_value(0, x0, h0, mu_flow, fb, params, n_paths,
                                  rng::combine(seed, 1000 + pi), fctx.get());
    if (pi == 0) rep.feedback_value = base.estimate;
    for (std::size_t ci = 0; ci < challengers.size(); ++ci) {
      const McValue ch = mc_value(0, x0, h0, mu_flow, challengers[ci].policy, params,
                                  n_paths, rng::combine(seed, 2000 + ci * 100 + pi),
                                  fctx.get());
      const double gap = ch.estimate - base.estimate;
      const double tol = 3.0 * std::sqrt(sqr(ch.std_error) + sqr(base.std_error));
      if (gap > rep.gap) {
        rep.gap = gap;
        rep.tolerance = tol + 0.02 * std::max(1e-6, std::abs(base.estimate));
        rep.best_challenger = challengers[ci].name;
      }
    }
  }
  rep.ok = rep.gap <= rep.tolerance;
  return rep;
}

ConvergenceSummary convergence_diagnostics(const FixedPointReport& report) {
  ConvergenceSummary s;
  s.verdict = report.verdict;
  std::vector<double> gaps;
  for (const auto& it : report.iterations) {
    gaps.push_back(it.gap);
    if (!(it.membership.p2_ok && it.membership.holder_ok && it.membership.initial_ok))
      s.all_in_Q = false;
  }
  for (std::size_t i = 1; i < gaps.size(); ++i)
    if (gaps[i] > gaps[i - 1]) s.gaps_monotone = false;
  // least-squares slope of log gap_k against k, over positive gaps
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < gaps.size(); ++i)
    if (gaps[i] > 0.0) pts.emplace_back(static_cast<double>(i), std::log(gaps[i]));
  if (pts.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [x, y] : pts) {
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double n = static_cast<double>(pts.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    s.rate_defined = true;
    s.geometric_rate = std::exp(slope);
  }
  return s;
}

void write_run_directory(const MfgSolution& sol, const std::string& dir) {
  fs::create_directories(dir);
  if (!sol.flow.measures.empty()) {
    save_flow(sol.flow, (fs::path(dir) / "flow").string());
    save_flow_diagnostics(sol.flow, (fs::path(dir) / "flow_moments.csv").string());
  }
  if (!sol.value.w.empty()) save_value_field(sol.value, (fs::path(dir) / "value").string());

  const FixedPointReport& rep = sol.report;
  json j;
  j["verdict"] = rep.verdict;
  j["horizon_violation"] = rep.horizon_violation;
  j["self_map_residual"] = rep.self_map_residual;
  j["constants"] = {{"K1", rep.constants.K1},
                    {"K2", rep.constants.K2},
                    {"T_max", rep.constants.t_max_infinite
                                  ? json("infinite")
                                  : json(rep.constants.T_max)},
                    {"C_12", rep.constants.C_12},
                    {"C_22", rep.constants.C_22},
                    {"C_14", rep.constants.C_14},
                    {"C_24", rep.constants.C_24},
                    {"B_02", rep.constants.B_02},
                    {"B_04", rep.constants.B_04}};
  j["iterations"] = json::array();
  for (const auto& it : rep.iterations)
    j["iterations"].push_back({{"gap", it.gap},
                               {"p2_ok", it.membership.p2_ok},
                               {"holder_ok", it.membership.holder_ok},
                               {"initial_ok", it.membership.initial_ok},
                               {"M_final", it.M_final},
                               {"M2_final", it.M2_final},
                               {"P2_max", it.P2_max},
                               {"grad_bound", it.grad_bound}});
  j["exploitability"] = {{"gap", rep.exploitability.gap},
                         {"tolerance", rep.exploitability.tolerance},
                         {"feedback_value", rep.exploitability.feedback_value},
                         {"best_challenger", rep.exploitability.best_challenger},
                         {"ok", rep.exploitability.ok}};
  {
    std::ofstream out(fs::path(dir) / "report.json");
    out << j.dump(2) << '\n';
  }
  {
    // volatile timing data kept out of the reproducible artifact set
    json t;
    t["total_wall_seconds"] = rep.total_wall_seconds;
    t["iteration_wall_seconds"] = json::array();
    for (const auto& it : rep.iterations)
      t["iteration_wall_seconds"].push_back(it.wall_seconds);
    std::ofstream out(fs::path(dir) / "timing.json");
    out << t.dump(2) << '\n';
  }
  {
    std::ofstream out(fs::path(dir) / "diagnostics.csv");
    out << "iteration,gap,p2_ok,holder_ok,initial_ok,grad_bound\n";
    for (std::size_t i = 0; i < rep.iterations.size(); ++i) {
      const auto& it = rep.iterations[i];
      out << (i + 1) << ',' << format_g17(it.gap) << ',' << it.membership.p2_ok << ','
          << it.membership.holder_ok << ',' << it.membership.initial_ok << ','
          << format_g17(it.grad_bound) << '\n';
    }
  }
}

}  // namespace mfg
