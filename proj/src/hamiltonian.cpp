#include "mfg/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mfg/interaction.hpp"
#include "mfg/rng.hpp"
#include "mfg/util.hpp"

namespace mfg {

namespace {

// pow with exact-zero short circuit; positive bases only.
double zpow(double base, double e) {
  if (base == 0.0) {
    if (e > 0.0) return 0.0;
    throw std::domain_error("zpow: zero base with nonpositive exponent");
  }
  return std::exp(e * std::log(base));
}

}  // namespace

double H0(const ModelParams& p, double momentum) {
  const double v = dpH0(p, momentum);
  return momentum * v - cost_eval(p.cost_spec, v);
}

double dpH0(const ModelParams& p, double momentum) {
  const int m = p.cost_spec.half_degree;
  const double kappa = p.cost_spec.kappa;
  // stationary point of p v - kappa v^{2m}: |v| = (|p| / (2 m kappa))^{1/(2m-1)}
  double v;
  if (momentum == 0.0) {
    v = 0.0;
  } else {
    const double mag = std::pow(std::abs(momentum) / (2.0 * m * kappa),
                                1.0 / (2.0 * m - 1.0));
    v = momentum > 0 ? mag : -mag;
  }
  return std::clamp(v, p.control_box.v_lo, p.control_box.v_hi);
}

Threshold p0_threshold(const ModelParams& p, double x, double h, double Fval) {
  Threshold t;
  const double fh = production_eval(p.f_spec, h);
  if (fh == 0.0 || Fval <= 0.0) {
    t.infinite = true;
    return t;
  }
  const double A = amenity_eval(p.A_spec, x);
  t.value = (1.0 - p.gamma) * zpow(A, 1.0 - p.sigma) * zpow(fh, p.eta_exp - 1.0) *
            zpow(Fval, p.gamma * (1.0 - p.sigma) - 1.0);
  return t;
}

double s_bar(const ModelParams& p, double x, double h, double Fval, double momentum) {
  const Threshold t = p0_threshold(p, x, h, Fval);
  if (t.infinite || momentum <= t.value) return 0.0;
  return 1.0 - zpow(t.value / momentum, 1.0 / (1.0 - p.eta_exp));
}

double H1(const ModelParams& p, double x, double h, double Fval, double momentum) {
  const double fh = production_eval(p.f_spec, h);
  const double A = amenity_eval(p.A_spec, x);
  const Threshold t = p0_threshold(p, x, h, Fval);
  if (t.infinite || momentum <= t.value) {
    // s = 0 branch: pure consumption utility minus depreciation drift.
    double util = 0.0;
    if (fh > 0.0 && Fval > 0.0)
      util = zpow(A, 1.0 - p.sigma) * zpow(fh, p.eta_exp) *
             zpow(Fval, p.gamma * (1.0 - p.sigma)) / (1.0 - p.sigma);
    return util - p.zeta * h * momentum;
  }
  const double eta = p.eta_exp;
  return (fh * Fval - p.zeta * h) * momentum +
         ((1.0 - eta) / eta) * zpow(t.value, 1.0 / (1.0 - eta)) * fh * Fval *
             zpow(momentum, -eta / (1.0 - eta));
}

double dpH1(const ModelParams& p, double x, double h, double Fval, double momentum) {
  const Threshold t = p0_threshold(p, x, h, Fval);
  if (t.infinite || momentum <= t.value) return -p.zeta * h;
  const double fh = production_eval(p.f_spec, h);
  return -p.zeta * h +
         fh * Fval * (1.0 - zpow(t.value / momentum, 1.0 / (1.0 - p.eta_exp)));
}

H1Breakdown h1_breakdown(const ModelParams& p, double x, double h, double Fval,
                         double momentum) {
  H1Breakdown b;
  b.p0 = p0_threshold(p, x, h, Fval);
  b.s_bar = s_bar(p, x, h, Fval, momentum);
  b.value = H1(p, x, h, Fval, momentum);
  b.dp = dpH1(p, x, h, Fval, momentum);
  const double eta = p.eta_exp;
  if (!b.p0.infinite && momentum >= b.p0.value && b.p0.value > 0.0) {
    const double fh = production_eval(p.f_spec, h);
    const double pp = momentum == b.p0.value ? b.p0.value : momentum;
    b.dpp = 1.0 / (1.0 - eta) * fh * Fval * zpow(b.p0.value, 1.0 / (1.0 - eta)) *
            zpow(pp, -(2.0 - eta) / (1.0 - eta));
    b.dpp_at_threshold = momentum == b.p0.value;
  }
  return b;
}

Threshold p0_threshold(const ModelParams& p, double x, double h,
                       const EmpiricalMeasure& mu) {
  return p0_threshold(p, x, h, interaction_F(p, mu, x));
}

double s_bar(const ModelParams& p, double x, double h, const EmpiricalMeasure& mu,
             double momentum) {
  return s_bar(p, x, h, interaction_F(p, mu, x), momentum);
}

double H1(const ModelParams& p, double x, double h, const EmpiricalMeasure& mu,
          double momentum) {
  return H1(p, x, h, interaction_F(p, mu, x), momentum);
}

double dpH1(const ModelParams& p, double x, double h, const EmpiricalMeasure& mu,
            double momentum) {
  return dpH1(p, x, h, interaction_F(p, mu, x), momentum);
}

double dppH1(const ModelParams& p, double x, double h, const EmpiricalMeasure& mu,
             double momentum, bool* at_threshold) {
  const H1Breakdown b = h1_breakdown(p, x, h, interaction_F(p, mu, x), momentum);
  if (at_threshold) *at_threshold = b.dpp_at_threshold;
  return b.dpp;
}

GrowthEnvelopes growth_envelopes(const ModelParams& p, double z) {
  if (z < 0.0) throw std::domain_error("growth envelope argument must be >= 0");
  GrowthEnvelopes e;
  const double ratio = p.theta_hi * z / p.theta_lo;
  const double eta = p.eta_exp;
  // The h^eta coefficients carry L_f^eta (f is only Lipschitz with f(0)=0,
  // so f(h)^eta <= L_f^eta h^eta) and the saving branch contributes the full
  // utility value u_sigma = b/(1-sigma), hence the 1/(1-sigma) factor.
  const double base = zpow(p.L_f, eta) * zpow(p.A_hi, 1.0 - p.sigma) *
                      zpow(ratio, p.gamma * (1.0 - p.sigma));
  e.g = std::max({p.zeta, base / (1.0 - p.sigma),
                  (1.0 - p.gamma) * ((1.0 - eta) / eta) * base, ratio - p.zeta});
  e.g1 = p.zeta + 2.0 * ratio;
  return e;
}

double dppH1_magnitude_bound(const ModelParams& p, double h, double Fval) {
  const double fh = production_eval(p.f_spec, h);
  if (fh == 0.0 || Fval <= 0.0) return 0.0;
  const double eta = p.eta_exp;
  return 1.0 / (1.0 - eta) * 1.0 / (1.0 - p.gamma) * zpow(p.A_lo, p.sigma - 1.0) *
         zpow(fh, 2.0 - eta) * zpow(Fval, 2.0 - p.gamma * (1.0 - p.sigma));
}

namespace {

// Ceiling for the local Lipschitz constant of dpH1 over the region
// { 1/N < M(mu) <= sqrt(M2(mu)) < N, h < N }, assembled from the
// directional bounds: F substituted by its extremes over the region and
// M/M2/h by N or 1/N according to the exponent sign.
double lipschitz_ceiling(const ModelParams& p, double N) {
  const double eta = p.eta_exp;
  const double alpha = (1.0 - p.gamma * (1.0 - p.sigma)) / (1.0 - eta);
  const double beta = (1.0 - p.sigma) / (1.0 - eta);
  const double ThOv = p.theta_hi / p.theta_lo;
  const double F_hi = ThOv * N;
  const double f_hi = p.L_f * N;
  const double L_eta = std::max(p.L_eta1, p.L_eta2);
  const double L12 = p.L_eta1 + p.L_eta2;
  const double A_hi = p.A_hi, A_lo = p.A_lo;
  const double A_pow = std::max(zpow(A_hi, beta - 1.0), zpow(A_lo, beta - 1.0));

  // p direction: second-derivative ceiling at the region extremes.
  const double c_p = 1.0 / ((1.0 - eta) * (1.0 - p.gamma)) * zpow(A_lo, p.sigma - 1.0) *
                     zpow(f_hi, 2.0 - eta) * zpow(F_hi, 2.0 - p.gamma * (1.0 - p.sigma));

  // h direction: d/dh dpH1 = -zeta + f'(h) F on the active branch, since
  // f F (p0/p)^{1/(1-eta)} is h-free (p0 scales as f(h)^{eta-1}).
  const double c_h = p.zeta + p.L_f * F_hi;

  // mu direction, same-branch and threshold-crossing cases.
  const double lip_mu_F = p.theta_hi / (p.theta_lo * p.theta_lo) * (N * L12 + p.theta_hi);
  const double c_mu_a =
      f_hi * lip_mu_F *
      (1.0 + std::abs(1.0 - alpha) * zpow(ThOv * ThOv * N * N, alpha));
  const double c_mu_b = zpow(ThOv * N, 1.0 + alpha) * f_hi *
                        (1.0 - p.gamma * (1.0 - p.sigma)) *
                        zpow(ThOv * N, 2.0 - p.gamma * (1.0 - p.sigma)) * lip_mu_F;

  // x direction: same-branch pieces plus the threshold crossing.
  const double M_for_1ma =
      (1.0 - alpha >= 0.0) ? ThOv * N : p.theta_lo / (p.theta_hi * N);
  const double c_x_same =
      2.0 * f_hi * L_eta * p.theta_hi / (p.theta_lo * p.theta_lo) * N +
      zpow(A_hi, beta) * std::abs(1.0 - alpha) * zpow(ThOv * N, alpha) * 2.0 * L_eta *
          p.theta_hi / (p.theta_lo * p.theta_lo) * N +
      zpow(M_for_1ma, 1.0 - alpha) * beta * A_pow * p.L_A;
  const double c_x_cross =
      f_hi * zpow(ThOv, 1.0 + 2.0 * alpha) * N * zpow(A_lo, -beta) *
      (beta * A_pow * p.L_A +
       zpow(A_hi, beta) * alpha * 2.0 * L_eta * p.theta_hi * p.theta_hi /
           (p.theta_lo * p.theta_lo * p.theta_lo));

  return std::max({c_p, c_h, c_mu_a, c_mu_b, c_x_same, c_x_cross});
}

EmpiricalMeasure random_cloud(const rng::Key& key, std::uint64_t tag, double N) {
  EmpiricalMeasure mu;
  rng::Key k = key.with(tag);
  const int n = 3 + static_cast<int>(4.0 * rng::uniform(k, 0));
  for (int i = 0; i < n; ++i) {
    mu.x.push_back(-2.0 + 4.0 * rng::uniform(k, 10 + 3 * i));
    // keep sqrt(M2) strictly inside (1/N, N)
    const double h_cap = 0.9 * N / std::sqrt(static_cast<double>(n));
    const double h_lo = 1.2 / N;
    mu.h.push_back(h_lo + (h_cap - h_lo) * rng::uniform(k, 11 + 3 * i));
    mu.w.push_back(1.0 / n);
  }
  return mu;
}

}  // namespace

LipschitzProbe dpH1_lipschitz_probe(const ModelParams& p, int region_N, int n_samples,
                                    std::uint64_t seed) {
  if (region_N < 1) throw std::invalid_argument("region_N must be >= 1");
  const double N = static_cast<double>(region_N);
  LipschitzProbe rep;
  rep.ceiling = lipschitz_ceiling(p, N);
  rng::Key key(rng::label_seed(seed, "dph1-lipschitz"));
  for (int it = 0; it < n_samples; ++it) {
    rng::Key k = key.with(static_cast<std::uint64_t>(it));
    EmpiricalMeasure mu1 = random_cloud(k, 1, N);
    EmpiricalMeasure mu2 = random_cloud(k, 2, N);
    // Small-perturbation pairs half the time to probe the local constant.
    if (rng::uniform(k, 0) < 0.5) {
      mu2 = mu1;
      for (std::size_t i = 0; i < mu2.size(); ++i) {
        mu2.x[i] += 0.01 * (rng::uniform(k, 100 + static_cast<std::uint64_t>(i)) - 0.5);
        mu2.h[i] = std::max(1.1 / N, mu2.h[i] + 0.01 * (rng::uniform(k, 200 + static_cast<std::uint64_t>(i)) - 0.5));
      }
    }
    if (moment_M(mu1) <= 1.0 / N || moment_M(mu2) <= 1.0 / N) continue;
    if (std::sqrt(moment_M2(mu1)) >= N || std::sqrt(moment_M2(mu2)) >= N) continue;
    const double x1 = -2.0 + 4.0 * rng::uniform(k, 3);
    const double x2 = x1 + 0.2 * (rng::uniform(k, 4) - 0.5);
    const double h1 = (N - 1e-3) * rng::uniform(k, 5);
    const double h2 = std::min(N - 1e-3, std::max(0.0, h1 + 0.1 * (rng::uniform(k, 6) - 0.5)));
    const double p1 = 5.0 * rng::uniform(k, 7);
    const double p2 = p1 + 0.1 * (rng::uniform(k, 8) - 0.5);
    const double d1 = dpH1(p, x1, h1, mu1, p1);
    const double d2 = dpH1(p, x2, h2, mu2, p2);
    const double denom = std::abs(x1 - x2) + std::abs(h1 - h2) + wasserstein1(mu1, mu2) +
                         std::abs(p1 - p2);
    if (denom < 1e-12) continue;
    rep.max_ratio = std::max(rep.max_ratio, std::abs(d1 - d2) / denom);
  }
  rep.ok = rep.max_ratio <= rep.ceiling;
  return rep;
}

double running_utility(const ModelParams& p, double x, double h, double s, double Fval) {
  if (s < 0.0 || s > 1.0) throw std::domain_error("saving fraction must be in [0,1]");
  if (h < 0.0) throw std::domain_error("capital must be >= 0");
  const double fh = production_eval(p.f_spec, h);
  if (fh == 0.0 || Fval <= 0.0 || s == 1.0) return 0.0;
  const double A = amenity_eval(p.A_spec, x);
  const double inner = std::log(A) + (1.0 - p.gamma) * std::log((1.0 - s) * fh) +
                       p.gamma * std::log(Fval);
  return std::exp((1.0 - p.sigma) * inner) / (1.0 - p.sigma);
}

double running_utility(const ModelParams& p, double x, double h, double s,
                       const EmpiricalMeasure& mu) {
  return running_utility(p, x, h, s, interaction_F(p, mu, x));
}

}  // namespace mfg
