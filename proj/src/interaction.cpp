#include "mfg/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mfg/util.hpp"

namespace mfg {

double bracket_b1(const ModelParams& p, const EmpiricalMeasure& mu, double x) {
  NeumaierSum s;
  for (std::size_t i = 0; i < mu.size(); ++i)
    s.add(mu.w[i] * kernel_eval(p.kernel1, std::abs(x - mu.x[i])) * mu.h[i]);
  return s.value();
}

double bracket_b2(const ModelParams& p, const EmpiricalMeasure& mu, double x) {
  NeumaierSum s;
  for (std::size_t i = 0; i < mu.size(); ++i)
    s.add(mu.w[i] * kernel_eval(p.kernel2, std::abs(x - mu.x[i])));
  return s.value();
}

double interaction_F(const ModelParams& p, const EmpiricalMeasure& mu, double x) {
  if (moment_M(mu) == 0.0) return 0.0;
  return bracket_b1(p, mu, x) / bracket_b2(p, mu, x);
}

FBoundsReport f_bounds_check(const ModelParams& p, const EmpiricalMeasure& mu) {
  FBoundsReport rep;
  const double M = moment_M(mu);
  rep.lower = (p.theta_lo / p.theta_hi) * M;
  rep.upper = (p.theta_hi / p.theta_lo) * M;
  double x_lo = mu.x.front(), x_hi = mu.x.front();
  for (double x : mu.x) {
    x_lo = std::min(x_lo, x);
    x_hi = std::max(x_hi, x);
  }
  x_lo -= 5.0;
  x_hi += 5.0;
  const int n = 401;
  rep.worst_slack = rep.upper - rep.lower;
  for (int i = 0; i < n; ++i) {
    const double x = x_lo + (x_hi - x_lo) * i / (n - 1);
    const double f = interaction_F(p, mu, x);
    const double slack = std::min(f - rep.lower, rep.upper - f);
    if (slack < rep.worst_slack) {
      rep.worst_slack = slack;
      rep.worst_x = x;
    }
    if (slack < -1e-12) rep.ok = false;
  }
  return rep;
}

double f_lipschitz_x_constant(const ModelParams& p, const EmpiricalMeasure& mu) {
  const double L_eta = std::max(p.L_eta1, p.L_eta2);
  return 2.0 * L_eta * p.theta_hi / (p.theta_lo * p.theta_lo) * moment_M(mu);
}

double f_lipschitz_mu_constant(const ModelParams& p, const EmpiricalMeasure& mu) {
  return p.theta_hi / (p.theta_lo * p.theta_lo) *
         (std::sqrt(moment_M2(mu)) * (p.L_eta1 + p.L_eta2) + p.theta_hi);
}

FContext::FContext(const ModelParams& p, const EmpiricalMeasure& mu, double x_min,
                   double x_max, int n_nodes)
    : x_min_(x_min), M_(moment_M(mu)), values_(static_cast<std::size_t>(n_nodes)) {
  if (n_nodes < 2) throw std::invalid_argument("FContext needs at least 2 nodes");
  dx_ = (x_max - x_min) / (n_nodes - 1);
  parallel_for(0, values_.size(), [&](std::size_t i) {
    const double x = x_min_ + dx_ * static_cast<double>(i);
    values_[i] = (M_ == 0.0) ? 0.0 : bracket_b1(p, mu, x) / bracket_b2(p, mu, x);
  });
}

FlowFContext::FlowFContext(const ModelParams& p, const MeasureFlow& flow) {
  slices_.reserve(flow.size());
  for (const auto& mu : flow.measures) {
    double lo = mu.x.front(), hi = mu.x.front();
    for (double v : mu.x) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    slices_.emplace_back(p, mu, lo - 3.0, hi + 3.0, 256);
  }
}

double FContext::F(double x) const {
  const double s = (x - x_min_) / dx_;
  if (s <= 0.0) return values_.front();
  const double smax = static_cast<double>(values_.size() - 1);
  if (s >= smax) return values_.back();
  const std::size_t i = static_cast<std::size_t>(s);
  const double frac = s - static_cast<double>(i);
  return values_[i] * (1.0 - frac) + values_[i + 1] * frac;
}

}  // namespace mfg
