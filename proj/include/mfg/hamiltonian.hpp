#pragma once

#include <cstdint>

#include "mfg/measures.hpp"
#include "mfg/params.hpp"

namespace mfg {

// Threshold momentum p0(x, h, mu). The infinite branch (h = 0 or the
// measure carries no capital) is an explicit tag, never a float sentinel.
struct Threshold {
  bool infinite = false;
  double value = 0.0;
};

struct H1Breakdown {
  Threshold p0;
  double s_bar = 0.0;
  double value = 0.0;
  double dp = 0.0;
  double dpp = 0.0;
  bool dpp_at_threshold = false;  // p == p0 exactly: dpp is the right limit
};

// Kinetic Hamiltonian H0(p) = sup_{v in K} { p v - kappa v^{2m} } and its
// derivative (the optimal velocity, envelope theorem).
double H0(const ModelParams& p, double momentum);
double dpH0(const ModelParams& p, double momentum);

// Core calculus in terms of the interaction value Fval = F(x, mu).
// Fval = 0 encodes M(mu) = 0 (these coincide on empirical measures).
Threshold p0_threshold(const ModelParams& p, double x, double h, double Fval);
double s_bar(const ModelParams& p, double x, double h, double Fval, double momentum);
double H1(const ModelParams& p, double x, double h, double Fval, double momentum);
double dpH1(const ModelParams& p, double x, double h, double Fval, double momentum);
H1Breakdown h1_breakdown(const ModelParams& p, double x, double h, double Fval,
                         double momentum);

// Measure-based convenience overloads.
Threshold p0_threshold(const ModelParams& p, double x, double h, const EmpiricalMeasure& mu);
double s_bar(const ModelParams& p, double x, double h, const EmpiricalMeasure& mu,
             double momentum);
double H1(const ModelParams& p, double x, double h, const EmpiricalMeasure& mu,
          double momentum);
double dpH1(const ModelParams& p, double x, double h, const EmpiricalMeasure& mu,
            double momentum);
double dppH1(const ModelParams& p, double x, double h, const EmpiricalMeasure& mu,
             double momentum, bool* at_threshold = nullptr);

// Growth envelopes of the Hamiltonian magnitude bounds:
// |H1| <= g(M(mu)) (h p + h^eta), |dpH1| <= g1(M(mu)) h.
struct GrowthEnvelopes {
  double g = 0.0;
  double g1 = 0.0;
};
GrowthEnvelopes growth_envelopes(const ModelParams& p, double z);

// Magnitude ceiling for |dppH1| away from the threshold.
double dppH1_magnitude_bound(const ModelParams& p, double h, double Fval);

// Empirical local-Lipschitz probe for dpH1 on the region
// 1/N < M(mu) <= sqrt(M2) < N, h < N.
struct LipschitzProbe {
  double max_ratio = 0.0;
  double ceiling = 0.0;
  bool ok = true;  // max_ratio <= ceiling
};
LipschitzProbe dpH1_lipschitz_probe(const ModelParams& p, int region_N, int n_samples,
                                    std::uint64_t seed);

// Instantaneous utility of consuming the unsaved output share.
double running_utility(const ModelParams& p, double x, double h, double s, double Fval);
double running_utility(const ModelParams& p, double x, double h, double s,
                       const EmpiricalMeasure& mu);

}  // namespace mfg
