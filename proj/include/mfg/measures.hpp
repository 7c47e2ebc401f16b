#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mfg {

// Weighted empirical probability measure on R x R_+.
struct EmpiricalMeasure {
  std::vector<double> x;
  std::vector<double> h;
  std::vector<double> w;

  std::size_t size() const { return x.size(); }
};

// Throws std::invalid_argument on a broken invariant.
void check_measure(const EmpiricalMeasure& mu);

// First and second capital moments and the full second moment.
double moment_M(const EmpiricalMeasure& mu);
double moment_M2(const EmpiricalMeasure& mu);
double moment_P2(const EmpiricalMeasure& mu);

// Largest combined support handled by the exact transport solver.
inline constexpr std::size_t kExactTransportCap = 512;

// Exact Wasserstein distances between weighted empirical measures.
// Throws std::length_error if mu.size() + nu.size() > kExactTransportCap;
// callers wanting automatic reduction use the *_capped variants.
double wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);
double wasserstein1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

// Deterministic seeded reduction to at most n atoms, stratified by
// h-quantile so the capital distribution tails survive the cut.
EmpiricalMeasure subsample(const EmpiricalMeasure& mu, std::size_t n, std::uint64_t seed);

// Wasserstein distances with automatic subsampling above the exact cap.
double wasserstein2_capped(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                           std::uint64_t seed);
double wasserstein1_capped(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                           std::uint64_t seed);

struct MeasureFlow {
  std::vector<double> times;
  std::vector<EmpiricalMeasure> measures;

  std::size_t size() const { return times.size(); }
};

void check_flow(const MeasureFlow& flow);

// d_{inf,2}: sup over shared grid times of W2. Throws on mismatched grids.
double flow_distance(const MeasureFlow& a, const MeasureFlow& b, std::uint64_t seed);

// sup over grid-time pairs of W2(mu(s), mu(t)) / sqrt(|s - t|). A stride
// above 1 restricts the pair set to every stride-th grid time (plus the
// endpoints) — a cheaper diagnostic for long flows.
double holder_seminorm(const MeasureFlow& flow, std::uint64_t seed, std::size_t stride = 1);

struct QMembership {
  bool p2_ok = true;
  bool holder_ok = true;
  bool initial_ok = true;
  double worst_p2 = 0.0;
  double worst_p2_time = 0.0;
  double holder_lower = 0.0;  // max ratio over adjacent grid times
  double holder_upper = 0.0;  // triangle-inequality bound over all pairs
  bool holder_exact = false;  // true when the full pairwise sup was computed
  double holder_value = 0.0;  // exact sup when holder_exact, else holder_upper
};

// The Holder test is decided from adjacent-pair distances when possible:
// chaining the triangle inequality bounds W2(mu_s, mu_t) by the sum of
// adjacent distances, so the seminorm lies in [holder_lower, holder_upper].
// Only when K2 falls inside that bracket is the full pairwise sup computed.
QMembership q_membership(const MeasureFlow& flow, const EmpiricalMeasure& mu0, double K1,
                         double K2, std::uint64_t seed);

// CSV snapshot (header "x,h,w") and flow-directory (index + per-time CSV) I/O.
void save_measure_csv(const EmpiricalMeasure& mu, const std::string& path);
EmpiricalMeasure load_measure_csv(const std::string& path);
void save_flow(const MeasureFlow& flow, const std::string& dir);
MeasureFlow load_flow(const std::string& dir);

}  // namespace mfg
