#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mfg {

// eta(r) = floor + (cap - floor) * exp(-r^2 / length^2)
struct KernelSpec {
  double floor = 0.9;
  double cap = 1.1;
  double length = 1.0;
};

double kernel_eval(const KernelSpec& k, double r);
// Exact Lipschitz constant: (cap - floor) * sqrt(2/e) / length.
double kernel_lipschitz(const KernelSpec& k);

struct ProductionSpec {
  enum class Kind { Linear, Saturating };
  Kind kind = Kind::Saturating;
  double beta = 1.0;   // slope at 0; also the Lipschitz constant
  double h_sat = 1.0;  // saturation scale (Saturating only)
};

double production_eval(const ProductionSpec& f, double h);
double production_lipschitz(const ProductionSpec& f);

// A(x) = lo + (hi - lo) * (1 + tanh(x / length)) / 2
struct AmenitySpec {
  double lo = 0.9;
  double hi = 1.1;
  double length = 2.0;
};

double amenity_eval(const AmenitySpec& a, double x);
double amenity_lipschitz(const AmenitySpec& a);

// a(v) = kappa * v^(2m)
struct CostSpec {
  double kappa = 1.0;
  int half_degree = 1;  // m
};

double cost_eval(const CostSpec& c, double v);

struct ControlBox {
  double v_lo = -0.5;
  double v_hi = 0.5;
};

struct ModelParams {
  double rho = 0.1;    // discount rate
  double zeta = 0.15;  // capital decay
  double chi = 0.3;    // capital volatility
  double eps = 0.05;   // spatial noise intensity
  double gamma = 0.5;  // spillover exponent
  double sigma = 0.5;  // utility curvature

  KernelSpec kernel1, kernel2;
  ProductionSpec f_spec;
  AmenitySpec A_spec;
  CostSpec cost_spec;
  ControlBox control_box;
  double horizon = 0.05;  // T

  // Derived, filled by validate(); read-only afterwards.
  double eta_exp = 0.0;   // (1-gamma)(1-sigma)
  double theta_lo = 0.0;  // global kernel floor
  double theta_hi = 0.0;  // global kernel cap
  double L_f = 0.0;
  double L_A = 0.0;
  double L_eta1 = 0.0;
  double L_eta2 = 0.0;
  double A_lo = 0.0;
  double A_hi = 0.0;
  double B_bar = 0.0;  // max(|v_lo|, |v_hi|), bound on D_p H0
};

// Initial population: x ~ N(x_mean, x_sd^2), h lognormal with the given
// log-moments; a zero_mass fraction of atoms starts pinned at h = 0.
struct Mu0Spec {
  double x_mean = 0.0;
  double x_sd = 0.3;
  double h_log_mean = -2.302585092994045684;  // log 0.1
  double h_log_sd = 0.25;
  double zero_mass = 0.0;  // fraction of atoms with h0 = 0
};

struct GridSpec {
  double x_min = -2.0, x_max = 2.0;
  double y_min = -7.0, y_max = 1.5;
  int n_x = 128, n_y = 64;
};

struct NumericsParams {
  int n_particles = 2000;
  int n_time = 128;
  GridSpec grid;
  double damping = 0.5;   // Picard relaxation lambda
  double tol_fp = 2e-3;   // fixed-point tolerance in d_{inf,2}
  int max_iter = 25;
  std::uint64_t seed = 20240817;
  int mc_paths = 4000;
  int threads = 1;
  Mu0Spec mu0;
};

std::vector<std::string> check_numerics(const NumericsParams& n);

// Fills derived quantities and returns the full list of violated
// invariants (empty when valid). Idempotent.
std::vector<std::string> validate(ModelParams& p);

struct Scenario {
  ModelParams model;
  NumericsParams numerics;
};

// Canonical baseline: saturating f, Gaussian-bump kernels, quadratic
// cost, horizon set to 80% of the admissible maximum for the default mu0.
Scenario default_scenario();

// Flat `key = value` config files with `#` comments.
Scenario parse_config(const std::string& text, std::vector<std::string>* errors);
Scenario load_config_file(const std::string& path);  // throws on I/O error
std::string config_to_text(const Scenario& s);

}  // namespace mfg
