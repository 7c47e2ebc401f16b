#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfg/dynamics.hpp"
#include "mfg/hjb.hpp"
#include "mfg/measures.hpp"
#include "mfg/params.hpp"

namespace mfg {

struct IterationStats {
  double gap = 0.0;
  QMembership membership;
  double M_final = 0.0, M2_final = 0.0, P2_max = 0.0;
  double grad_bound = 0.0;  // sup over grid of |D_xV| + |h D_hV|
  double wall_seconds = 0.0;
};

struct ExploitabilityReport {
  double gap = 0.0;
  double tolerance = 0.0;  // 3 * combined std error + discretization slack
  double feedback_value = 0.0;
  std::string best_challenger;
  bool ok = true;
};

struct FixedPointReport {
  std::vector<IterationStats> iterations;
  std::string verdict;  // converged | not converged | horizon violation
  bool horizon_violation = false;
  HorizonConstants constants;
  double self_map_residual = 0.0;
  ExploitabilityReport exploitability;
  double total_wall_seconds = 0.0;
};

struct ConvergenceSummary {
  bool rate_defined = false;
  double geometric_rate = 0.0;  // least-squares fit of log gap_k
  bool gaps_monotone = true;
  bool all_in_Q = true;
  std::string verdict;
};

// One application of the fixed-point map: HJB solve against mu_flow, then
// the McKean-Vlasov push of ensemble0 under the resulting feedback drift.
std::pair<MeasureFlow, ValueField> psi_map(const MeasureFlow& mu_flow,
                                           const ParticleEnsemble& ensemble0,
                                           const ModelParams& params,
                                           const NumericsParams& numerics);

// Measure-level damping: per time, the weighted union of atoms (lambda from
// a, 1-lambda from b), compacted back to the ensemble size by seeded
// stratified resampling. Time 0 passes through a's initial measure.
MeasureFlow mix_flows(double lambda, const MeasureFlow& a, const MeasureFlow& b,
                      std::size_t n_atoms, std::uint64_t seed);

struct MfgSolution {
  MeasureFlow flow;
  ValueField value;
  FixedPointReport report;
};

MfgSolution solve_mfg(const ParticleEnsemble& ensemble0, const ModelParams& params,
                      const NumericsParams& numerics);

ExploitabilityReport exploitability(const MeasureFlow& mu_flow, const ValueField& value,
                                    const ModelParams& params, const NumericsParams& numerics);

ConvergenceSummary convergence_diagnostics(const FixedPointReport& report);

// Run directory layout: flow/ (measure CSVs), value/ (value-field CSVs),
// report.json, diagnostics.csv. Wall-times go to the separate, volatile
// timing.json so everything else is byte-identical across reruns.
void write_run_directory(const MfgSolution& sol, const std::string& dir);

}  // namespace mfg
