#include "mfg/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>

#include "mfg/hamiltonian.hpp"
#include "mfg/interaction.hpp"
#include "mfg/rng.hpp"
#include "mfg/util.hpp"

namespace mfg {

HorizonConstants horizon_constants_from_moments(double P2, double Eh2,
                                                const ModelParams& params) {
  HorizonConstants hc;
  const double B = params.B_bar;
  // Smallest admissible K1 plus 10% headroom.
  hc.K1 = 1.1 * (3.0 * P2 + 3.0 * B * B + 12.0 * params.eps);
  const double chi2 = params.chi * params.chi;
  const double ratio = params.theta_hi / params.theta_lo;
  if (Eh2 <= 0.0) {
    hc.t_max_infinite = true;
    hc.T_max = std::numeric_limits<double>::infinity();
  } else {
    const double g1 = params.zeta + 2.0 * ratio * std::sqrt(2.0 * hc.K1);
    const double logterm = std::log(hc.K1 / (3.0 * Eh2));
    if (logterm <= 0.0) {
      hc.T_max = 0.0;
    } else {
      hc.T_max = (std::sqrt(144.0 * chi2 * chi2 + 48.0 * g1 * g1 * logterm) -
                  12.0 * chi2) /
                 (24.0 * g1 * g1);
    }
  }
  const double T_for_K2 = hc.t_max_infinite ? params.horizon : hc.T_max;
  const double lam = params.zeta + ratio * std::sqrt(2.0 * hc.K1);
  hc.K2 = std::sqrt(4.0 * T_for_K2 * (B * B + lam * lam * hc.K1) +
                    2.0 * params.eps * params.eps + 8.0 * chi2 * hc.K1);

  // Gronwall constants at the run horizon, with the population capital
  // mean bounded over the admissible set by sqrt(2 K1).
  const double T = params.horizon;
  const double Mbar = std::sqrt(2.0 * hc.K1);
  auto b0 = [](double p) { return std::pow(p * p * p / (2.0 * p - 2.0), p / 2.0); };
  auto c1 = [&](double p) { return std::pow(4.0 * T, p - 1.0) * std::pow(ratio * Mbar, p); };
  auto c2 = [&](double p) {
    return c1(p) * std::pow(params.L_f, p) +
           std::pow(4.0 * T, p - 1.0) * std::pow(params.zeta, p) +
           std::pow(4.0, p - 1.0) * b0(p) * std::pow(params.chi, p) *
               std::pow(T, (p - 2.0) / 2.0);
  };
  hc.B_02 = b0(2.0);
  hc.B_04 = b0(4.0);
  hc.C_12 = c1(2.0);
  hc.C_14 = c1(4.0);
  hc.C_22 = c2(2.0);
  hc.C_24 = c2(4.0);
  return hc;
}

HorizonConstants horizon_constants(const EmpiricalMeasure& mu0, const ModelParams& params) {
  check_measure(mu0);
  return horizon_constants_from_moments(moment_P2(mu0), moment_M2(mu0), params);
}

double ParticleEnsemble::h(std::size_t i) const {
  return masked[i] ? 0.0 : std::exp(y[i]);
}

EmpiricalMeasure ParticleEnsemble::measure() const {
  EmpiricalMeasure mu;
  const std::size_t n = size();
  mu.x = x;
  mu.h.resize(n);
  mu.w.assign(n, 1.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) mu.h[i] = h(i);
  return mu;
}

ParticleEnsemble sample_initial(const Mu0Spec& mu0, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("need at least one particle");
  ParticleEnsemble e;
  e.x.resize(n);
  e.y.resize(n, 0.0);
  e.masked.resize(n, 0);
  rng::Key key(rng::label_seed(seed, "mu0"));
  for (int i = 0; i < n; ++i) {
    const std::uint64_t c = static_cast<std::uint64_t>(i);
    e.x[i] = mu0.x_mean + mu0.x_sd * rng::normal(key.with(1), c);
    if (rng::uniform(key.with(3), c) < mu0.zero_mass) {
      e.masked[i] = 1;
    } else {
      e.y[i] = mu0.h_log_mean + mu0.h_log_sd * rng::normal(key.with(2), c);
    }
  }
  return e;
}

namespace {

constexpr double kFPad = 3.0;       // FContext padding beyond atom range
constexpr int kFNodes = 256;        // FContext sampling resolution

FContext make_fcontext(const ModelParams& params, const EmpiricalMeasure& mu) {
  double lo = mu.x.front(), hi = mu.x.front();
  for (double v : mu.x) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return FContext(params, mu, lo - kFPad, hi + kFPad, kFNodes);
}

void abort_nonfinite(const char* what, std::size_t atom, std::size_t step) {
  throw std::runtime_error(std::string("non-finite ") + what + " at atom " +
                           std::to_string(atom) + ", step " + std::to_string(step));
}

}  // namespace

PathBundle simulate_controlled(double x0, double h0, std::size_t t0_index,
                               const Policy& policy, const MeasureFlow& mu_flow,
                               const ModelParams& params, int n_paths,
                               std::uint64_t seed, const std::string& stream_label,
                               const FlowFContext* shared_fctx) {
  check_flow(mu_flow);
  if (h0 < 0.0) throw std::invalid_argument("initial capital must be >= 0");
  if (t0_index >= mu_flow.size()) throw std::invalid_argument("t0_index out of range");
  const std::size_t n_steps = mu_flow.size() - 1 - t0_index;
  const double dt = n_steps > 0 ? mu_flow.times[1] - mu_flow.times[0] : 0.0;
  const double sdt = std::sqrt(dt);

  std::optional<FlowFContext> own;
  if (!shared_fctx) own.emplace(params, mu_flow);
  const FlowFContext& fctx = shared_fctx ? *shared_fctx : *own;

  PathBundle pb;
  pb.times.resize(n_steps + 1);
  for (std::size_t k = 0; k <= n_steps; ++k) pb.times[k] = mu_flow.times[t0_index + k];
  const std::size_t np = static_cast<std::size_t>(n_paths);
  pb.x.assign(np, std::vector<double>(n_steps + 1));
  pb.h.assign(np, std::vector<double>(n_steps + 1));
  pb.s.assign(np, std::vector<double>(n_steps + 1));
  pb.v.assign(np, std::vector<double>(n_steps + 1));

  rng::Key key(rng::label_seed(seed, stream_label));
  const double chi2h = params.chi * params.chi / 2.0;
  parallel_for(0, np, [&](std::size_t i) {
    double x = x0;
    double y = h0 > 0.0 ? std::log(h0) : 0.0;
    const bool masked = h0 == 0.0;
    for (std::size_t k = 0; k <= n_steps; ++k) {
      const double t = pb.times[k];
      const double h = masked ? 0.0 : std::exp(y);
      Control c = policy(t, x, h);
      c.v = std::clamp(c.v, params.control_box.v_lo, params.control_box.v_hi);
      c.s = std::clamp(c.s, 0.0, 1.0);
      pb.x[i][k] = x;
      pb.h[i][k] = h;
      pb.v[i][k] = c.v;
      pb.s[i][k] = c.s;
      if (k == n_steps) break;
      const std::uint64_t c2 = 2 * (i * n_steps + k);
      const double xi_x = rng::normal(key.with(1), c2);
      const double xi_h = rng::normal(key.with(1), c2 + 1);
      const double F = fctx.at(t0_index + k).F(x);
      x += c.v * dt + params.eps * sdt * xi_x;
      if (!masked) {
        const double drift =
            std::exp(-y) * c.s * production_eval(params.f_spec, std::exp(y)) * F -
            params.zeta - chi2h;
        y += drift * dt + params.chi * sdt * xi_h;
        if (!std::isfinite(y)) abort_nonfinite("log-capital", i, k);
      }
      if (!std::isfinite(x)) abort_nonfinite("position", i, k);
    }
  });
  return pb;
}

MeasureFlow simulate_mkv(const ParticleEnsemble& ensemble0, const GradientFn& grads,
                         const ModelParams& params, const NumericsParams& numerics) {
  const std::size_t n = ensemble0.size();
  if (n == 0) throw std::invalid_argument("empty ensemble");
  const int n_steps = numerics.n_time;
  const double T = params.horizon;
  const double dt = T / n_steps;
  const double sdt = std::sqrt(dt);
  const double chi2h = params.chi * params.chi / 2.0;

  ParticleEnsemble e = ensemble0;
  MeasureFlow flow;
  flow.times.resize(n_steps + 1);
  flow.measures.reserve(n_steps + 1);

  rng::Key key(rng::label_seed(numerics.seed, "mkv"));
  for (int k = 0; k <= n_steps; ++k) {
    flow.times[k] = dt * k;
    EmpiricalMeasure mu = e.measure();
    flow.measures.push_back(mu);
    if (k == n_steps) break;
    const FContext fctx = make_fcontext(params, mu);
    const double t = flow.times[k];
    parallel_for(0, n, [&](std::size_t i) {
      const double h = e.h(i);
      const Gradients g = grads(t, e.x[i], h);
      const double v = dpH0(params, g.dx);
      const std::uint64_t c2 =
          2 * (i * static_cast<std::size_t>(n_steps) + static_cast<std::size_t>(k));
      const double xi_x = rng::normal(key.with(1), c2);
      const double xi_h = rng::normal(key.with(1), c2 + 1);
      e.x[i] += v * dt + params.eps * sdt * xi_x;
      if (!e.masked[i]) {
        const double F = fctx.F(e.x[i]);
        const double s = s_bar(params, e.x[i], h, F, g.dh);
        const double drift =
            std::exp(-e.y[i]) * s * production_eval(params.f_spec, h) * F -
            params.zeta - chi2h;
        e.y[i] += drift * dt + params.chi * sdt * xi_h;
        if (!std::isfinite(e.y[i]))
          abort_nonfinite("log-capital", i, static_cast<std::size_t>(k));
      }
      if (!std::isfinite(e.x[i]))
        abort_nonfinite("position", i, static_cast<std::size_t>(k));
    });
  }
  return flow;
}

namespace {

// C^2 compactly supported bump: (1 - z^2)^3 on |z| < 1, else 0.
double bump(double z) {
  if (std::abs(z) >= 1.0) return 0.0;
  const double q = 1.0 - z * z;
  return q * q * q;
}
double bump_d(double z) {
  if (std::abs(z) >= 1.0) return 0.0;
  const double q = 1.0 - z * z;
  return -6.0 * z * q * q;
}
double bump_dd(double z) {
  if (std::abs(z) >= 1.0) return 0.0;
  const double q = 1.0 - z * z;
  return -6.0 * q * q + 24.0 * z * z * q;
}

}  // namespace

std::vector<TestFunction> default_test_functions(double T, const GridSpec& grid) {
  std::vector<TestFunction> tests;
  const double h_hi = std::exp(grid.y_max);
  for (double xc : {0.5 * (grid.x_min + grid.x_max), 0.25 * grid.x_min + 0.75 * grid.x_max})
    for (double hc : {0.05 * h_hi, 0.2 * h_hi}) {
      TestFunction tf;
      tf.t_center = 0.5 * T;
      tf.t_width = 0.75 * T;
      tf.x_center = xc;
      tf.x_width = 0.5 * (grid.x_max - grid.x_min);
      tf.h_center = hc;
      tf.h_width = 2.0 * hc;
      tests.push_back(tf);
      tf.time_dependent = false;
      tests.push_back(tf);
    }
  return tests;
}

std::vector<double> fp_weak_residual(const MeasureFlow& flow, const GradientFn& grads,
                                     const ModelParams& params,
                                     const std::vector<TestFunction>& tests) {
  check_flow(flow);
  const std::size_t nt = flow.size();
  std::vector<double> residuals(tests.size(), 0.0);
  const FlowFContext fctx(params, flow);

  parallel_for(0, tests.size(), [&](std::size_t ti) {
    const TestFunction& tf = tests[ti];
    auto psi = [&](double t) {
      return tf.time_dependent ? bump((t - tf.t_center) / tf.t_width) : 1.0;
    };
    auto psi_d = [&](double t) {
      return tf.time_dependent ? bump_d((t - tf.t_center) / tf.t_width) / tf.t_width : 0.0;
    };
    auto phi_x = [&](double x) { return bump((x - tf.x_center) / tf.x_width); };
    auto phi_x_d = [&](double x) { return bump_d((x - tf.x_center) / tf.x_width) / tf.x_width; };
    auto phi_x_dd = [&](double x) {
      return bump_dd((x - tf.x_center) / tf.x_width) / (tf.x_width * tf.x_width);
    };
    auto phi_h = [&](double h) { return bump((h - tf.h_center) / tf.h_width); };
    auto phi_h_d = [&](double h) { return bump_d((h - tf.h_center) / tf.h_width) / tf.h_width; };
    auto phi_h_dd = [&](double h) {
      return bump_dd((h - tf.h_center) / tf.h_width) / (tf.h_width * tf.h_width);
    };

    auto boundary_term = [&](std::size_t k) {
      const EmpiricalMeasure& mu = flow.measures[k];
      NeumaierSum s;
      const double pt = psi(flow.times[k]);
      for (std::size_t i = 0; i < mu.size(); ++i)
        s.add(mu.w[i] * pt * phi_x(mu.x[i]) * phi_h(mu.h[i]));
      return s.value();
    };
    const double lhs = boundary_term(nt - 1) - boundary_term(0);

    // time-trapezoid of int [dt phi + b . grad phi + 1/2 tr(a D2 phi)] dmu
    std::vector<double> integrand(nt, 0.0);
    for (std::size_t k = 0; k < nt; ++k) {
      const EmpiricalMeasure& mu = flow.measures[k];
      const double t = flow.times[k];
      NeumaierSum s;
      for (std::size_t i = 0; i < mu.size(); ++i) {
        const double x = mu.x[i], h = mu.h[i];
        const Gradients g = grads(t, x, h);
        const double bx = dpH0(params, g.dx);
        const double bh = dpH1(params, x, h, fctx.at(k).F(x), g.dh);
        const double val =
            psi_d(t) * phi_x(x) * phi_h(h) +
            psi(t) * (bx * phi_x_d(x) * phi_h(h) + bh * phi_x(x) * phi_h_d(h) +
                      0.5 * params.eps * params.eps * phi_x_dd(x) * phi_h(h) +
                      0.5 * params.chi * params.chi * h * h * phi_x(x) * phi_h_dd(h));
        s.add(mu.w[i] * val);
      }
      integrand[k] = s.value();
    }
    NeumaierSum rhs;
    for (std::size_t k = 0; k + 1 < nt; ++k)
      rhs.add(0.5 * (integrand[k] + integrand[k + 1]) * (flow.times[k + 1] - flow.times[k]));
    residuals[ti] = std::abs(lhs - rhs.value());
  });
  return residuals;
}

MomentBoundReport moment_bound_check(const MeasureFlow& flow, const HorizonConstants& hc,
                                     double Eh2_0) {
  check_flow(flow);
  MomentBoundReport rep;
  if (Eh2_0 <= 0.0) return rep;  // degenerate population: bounds trivially 0 <= 0
  const std::size_t n = flow.measures.front().size();
  std::vector<double> run_sup(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double h = flow.measures.front().h[i];
    run_sup[i] = h * h;
  }
  rep.worst_sup_slack = std::numeric_limits<double>::infinity();
  rep.worst_mean_slack = std::numeric_limits<double>::infinity();
  const double z99 = 2.576;
  for (std::size_t k = 0; k < flow.size(); ++k) {
    const EmpiricalMeasure& mu = flow.measures[k];
    NeumaierSum mean_sup, mean_sup2, mean_h, mean_h2;
    for (std::size_t i = 0; i < n; ++i) {
      const double h2 = mu.h[i] * mu.h[i];
      run_sup[i] = std::max(run_sup[i], h2);
      mean_sup.add(mu.w[i] * run_sup[i]);
      mean_sup2.add(mu.w[i] * run_sup[i] * run_sup[i]);
      mean_h.add(mu.w[i] * mu.h[i]);
      mean_h2.add(mu.w[i] * h2);
    }
    const double t = flow.times[k];
    const double T = flow.times.back();
    const double se_sup = std::sqrt(
        std::max(0.0, mean_sup2.value() - sqr(mean_sup.value())) / static_cast<double>(n));
    const double se_h = std::sqrt(
        std::max(0.0, mean_h2.value() - sqr(mean_h.value())) / static_cast<double>(n));
    const double sup_bound = 4.0 * std::exp(hc.C_22 * t) * Eh2_0;
    const double mean_bound = 2.0 * std::exp(hc.C_22 * T / 2.0) * std::sqrt(Eh2_0);
    const double sup_slack = sup_bound - (mean_sup.value() - z99 * se_sup);
    const double mean_slack = mean_bound - (mean_h.value() - z99 * se_h);
    rep.worst_sup_slack = std::min(rep.worst_sup_slack, sup_slack);
    rep.worst_mean_slack = std::min(rep.worst_mean_slack, mean_slack);
    if (sup_slack < 0.0) rep.sup_ok = false;
    if (mean_slack < 0.0) rep.mean_ok = false;
  }
  return rep;
}

void save_flow_diagnostics(const MeasureFlow& flow, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "t,M,M2,P2,min_h_unmasked\n";
  for (std::size_t k = 0; k < flow.size(); ++k) {
    const EmpiricalMeasure& mu = flow.measures[k];
    double min_h = std::numeric_limits<double>::infinity();
    for (double h : mu.h)
      if (h > 0.0) min_h = std::min(min_h, h);
    if (!std::isfinite(min_h)) min_h = 0.0;
    out << format_g17(flow.times[k]) << ',' << format_g17(moment_M(mu)) << ','
        << format_g17(moment_M2(mu)) << ',' << format_g17(moment_P2(mu)) << ','
        << format_g17(min_h) << '\n';
  }
}

}  // namespace mfg
