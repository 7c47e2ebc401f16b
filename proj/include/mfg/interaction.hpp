#pragma once

#include <vector>

#include "mfg/measures.hpp"
#include "mfg/params.hpp"

namespace mfg {

// Kernel averages <<mu, b1>>(x) = sum w_i eta1(|x - x_i|) h_i and
// <<mu, b2>>(x) = sum w_i eta2(|x - x_i|).
double bracket_b1(const ModelParams& p, const EmpiricalMeasure& mu, double x);
double bracket_b2(const ModelParams& p, const EmpiricalMeasure& mu, double x);

// Nonlocal interaction F(x, mu) = <<mu,b1>>(x) / <<mu,b2>>(x); zero when
// the measure carries no capital.
double interaction_F(const ModelParams& p, const EmpiricalMeasure& mu, double x);

struct FBoundsReport {
  bool ok = true;
  double worst_slack = 0.0;  // min over the sweep of distance to either bound
  double worst_x = 0.0;
  double lower = 0.0;  // (theta/Theta) M(mu)
  double upper = 0.0;  // (Theta/theta) M(mu)
};

// Deterministic x-sweep checking (theta/Theta) M <= F <= (Theta/theta) M.
FBoundsReport f_bounds_check(const ModelParams& p, const EmpiricalMeasure& mu);

// Lipschitz modulus of x -> F(x, mu): 2 L_eta Theta theta^-2 M(mu).
double f_lipschitz_x_constant(const ModelParams& p, const EmpiricalMeasure& mu);

// Lipschitz modulus of mu -> F(x, mu) in W2:
// Theta theta^-2 (sqrt(M2) (L_eta1 + L_eta2) + Theta).
double f_lipschitz_mu_constant(const ModelParams& p, const EmpiricalMeasure& mu);

// Precomputed kernel sums for one measure on an x-grid, linearly
// interpolated (clamped beyond the ends). The denominator and numerator
// are h-independent per measure, so grid consumers reuse this instead of
// re-summing N atoms per query.
class FContext {
 public:
  FContext(const ModelParams& p, const EmpiricalMeasure& mu, double x_min, double x_max,
           int n_nodes);

  double F(double x) const;
  double M() const { return M_; }

 private:
  double x_min_, dx_;
  double M_;
  std::vector<double> values_;
};

// One FContext per flow time, built once and shared by every consumer of
// the same flow (policy evaluation, weak-form residuals, rollouts).
class FlowFContext {
 public:
  FlowFContext(const ModelParams& p, const MeasureFlow& flow);
  const FContext& at(std::size_t k) const { return slices_[k]; }
  std::size_t size() const { return slices_.size(); }

 private:
  std::vector<FContext> slices_;
};

}  // namespace mfg
