#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mfg/interaction.hpp"
#include "mfg/measures.hpp"
#include "mfg/params.hpp"

namespace mfg {

// Constants of the local-in-time well-posedness construction.
struct HorizonConstants {
  double K1 = 0.0;
  double K2 = 0.0;
  double T_max = 0.0;
  bool t_max_infinite = false;  // degenerate zero-capital population
  double B_02 = 0.0, B_04 = 0.0;
  double C_12 = 0.0, C_14 = 0.0;
  double C_22 = 0.0, C_24 = 0.0;
};

// Closed-form evaluation from the initial moments P2 = E[x0^2 + h0^2] and
// Eh2 = E[h0^2]; the C-constants use T = params.horizon.
HorizonConstants horizon_constants_from_moments(double P2, double Eh2,
                                                const ModelParams& params);
HorizonConstants horizon_constants(const EmpiricalMeasure& mu0, const ModelParams& params);

// State-feedback control pair: velocity v in K and saving fraction s in [0,1].
struct Control {
  double v = 0.0;
  double s = 0.0;
};
using Policy = std::function<Control(double t, double x, double h)>;

// Gradient oracle (D_xV, D_hV) supplied by the value-field owner.
struct Gradients {
  double dx = 0.0;
  double dh = 0.0;
};
using GradientFn = std::function<Gradients(double t, double x, double h)>;

struct ParticleEnsemble {
  std::vector<double> x;
  std::vector<double> y;       // log-capital; meaningful only where !masked
  std::vector<char> masked;    // true: h = 0 forever
  double time = 0.0;

  std::size_t size() const { return x.size(); }
  double h(std::size_t i) const;
  EmpiricalMeasure measure() const;
};

// Seeded draw of N atoms from the parametric initial law.
ParticleEnsemble sample_initial(const Mu0Spec& mu0, int n, std::uint64_t seed);

struct PathBundle {
  std::vector<double> times;
  // row-major [path][step]
  std::vector<std::vector<double>> x, h, s, v;
  std::size_t paths() const { return x.size(); }
};

// Fixed-control or feedback simulation of the single-agent state SDE
// against an exogenous measure flow; starts all paths at (x0, h0) at
// flow time index t0_index.
PathBundle simulate_controlled(double x0, double h0, std::size_t t0_index,
                               const Policy& policy, const MeasureFlow& mu_flow,
                               const ModelParams& params, int n_paths,
                               std::uint64_t seed, const std::string& stream_label,
                               const FlowFContext* shared_fctx = nullptr);

// Interacting particle system: each particle's drift reads the supplied
// value-gradient oracle and the ensemble's own empirical measure.
MeasureFlow simulate_mkv(const ParticleEnsemble& ensemble0, const GradientFn& grads,
                         const ModelParams& params, const NumericsParams& numerics);

// Compactly supported C^2 bump test function psi(t) beta(x) beta(h).
struct TestFunction {
  double t_center = 0.0, t_width = 1.0;
  double x_center = 0.0, x_width = 1.0;
  double h_center = 0.0, h_width = 1.0;
  bool time_dependent = true;  // false: psi == 1
};
std::vector<TestFunction> default_test_functions(double T, const GridSpec& grid);

// |LHS - RHS| of the weak Fokker-Planck identity per test function,
// with trapezoidal time quadrature and particle-sum space quadrature.
std::vector<double> fp_weak_residual(const MeasureFlow& flow, const GradientFn& grads,
                                     const ModelParams& params,
                                     const std::vector<TestFunction>& tests);

struct MomentBoundReport {
  bool sup_ok = true;       // E[sup_{s<=t} h^2] within bound at every time
  bool mean_ok = true;      // E[h(t)] within bound at every time
  double worst_sup_slack = 0.0;
  double worst_mean_slack = 0.0;
};

// Checks the Gronwall moment bounds against a particle flow (atoms keep
// their path identity across times), with 99% MC confidence allowance.
MomentBoundReport moment_bound_check(const MeasureFlow& flow, const HorizonConstants& hc,
                                     double Eh2_0);

// One row per grid time: t, M, M2, P2, min unmasked h.
void save_flow_diagnostics(const MeasureFlow& flow, const std::string& path);

}  // namespace mfg
