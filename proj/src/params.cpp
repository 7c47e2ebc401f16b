#include "mfg/params.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "mfg/dynamics.hpp"
#include "mfg/rng.hpp"
#include "mfg/util.hpp"

namespace mfg {

double kernel_eval(const KernelSpec& k, double r) {
  return k.floor + (k.cap - k.floor) * std::exp(-(r * r) / (k.length * k.length));
}

double kernel_lipschitz(const KernelSpec& k) {
  return (k.cap - k.floor) * std::sqrt(2.0 / std::exp(1.0)) / k.length;
}

double production_eval(const ProductionSpec& f, double h) {
  if (f.kind == ProductionSpec::Kind::Linear) return f.beta * h;
  return f.beta * h / (1.0 + h / f.h_sat);
}

double production_lipschitz(const ProductionSpec& f) { return f.beta; }

double amenity_eval(const AmenitySpec& a, double x) {
  return a.lo + (a.hi - a.lo) * 0.5 * (1.0 + std::tanh(x / a.length));
}

double amenity_lipschitz(const AmenitySpec& a) {
  return (a.hi - a.lo) / (2.0 * a.length);
}

double cost_eval(const CostSpec& c, double v) {
  double p = v * v;
  for (int i = 1; i < c.half_degree; ++i) p *= v * v;
  return c.kappa * p;
}

namespace {

void fill_derived(ModelParams& p) {
  p.eta_exp = (1.0 - p.gamma) * (1.0 - p.sigma);
  p.theta_lo = std::min(p.kernel1.floor, p.kernel2.floor);
  p.theta_hi = std::max(p.kernel1.cap, p.kernel2.cap);
  p.L_f = production_lipschitz(p.f_spec);
  p.L_A = amenity_lipschitz(p.A_spec);
  p.L_eta1 = kernel_lipschitz(p.kernel1);
  p.L_eta2 = kernel_lipschitz(p.kernel2);
  p.A_lo = p.A_spec.lo;
  p.A_hi = p.A_spec.hi;
  p.B_bar = std::max(std::abs(p.control_box.v_lo), std::abs(p.control_box.v_hi));
}

std::string num(double v) { return format_g17(v); }

}  // namespace

std::vector<std::string> validate(ModelParams& p) {
  std::vector<std::string> errors;
  auto fail = [&](const std::string& msg) { errors.push_back(msg); };

  if (!(p.rho > 0)) fail("rho must be > 0, got " + num(p.rho));
  if (!(p.zeta > 0)) fail("zeta must be > 0, got " + num(p.zeta));
  if (!(p.chi > 0)) fail("chi must be > 0, got " + num(p.chi));
  if (!(p.eps > 0)) fail("eps must be > 0, got " + num(p.eps));
  if (!(p.sigma > 0 && p.sigma < 1)) fail("sigma out of (0,1): " + num(p.sigma));
  if (!(p.gamma > 0 && p.gamma < 1)) fail("gamma out of (0,1): " + num(p.gamma));
  if (!(p.horizon > 0)) fail("horizon must be > 0, got " + num(p.horizon));

  for (const auto* k : {&p.kernel1, &p.kernel2}) {
    const char* name = (k == &p.kernel1) ? "kernel1" : "kernel2";
    if (!(k->floor > 0))
      fail(std::string(name) + " violates theta > 0: floor = " + num(k->floor));
    if (!(k->cap >= k->floor))
      fail(std::string(name) + " cap below floor: cap = " + num(k->cap));
    if (!(k->length > 0))
      fail(std::string(name) + " length must be > 0, got " + num(k->length));
  }

  if (!(p.f_spec.beta > 0)) fail("f_spec.beta must be > 0, got " + num(p.f_spec.beta));
  if (p.f_spec.kind == ProductionSpec::Kind::Saturating && !(p.f_spec.h_sat > 0))
    fail("f_spec.h_sat must be > 0, got " + num(p.f_spec.h_sat));
  if (!(p.A_spec.lo > 0)) fail("A_spec.lo must be > 0, got " + num(p.A_spec.lo));
  if (!(p.A_spec.hi >= p.A_spec.lo))
    fail("A_spec.hi below A_spec.lo: " + num(p.A_spec.hi));
  if (!(p.A_spec.length > 0)) fail("A_spec.length must be > 0");
  if (!(p.cost_spec.kappa > 0)) fail("cost_spec.kappa must be > 0, got " + num(p.cost_spec.kappa));
  if (p.cost_spec.half_degree < 1) fail("cost_spec.half_degree must be >= 1");
  if (!(p.control_box.v_lo <= 0.0 && 0.0 <= p.control_box.v_hi))
    fail("control_box must contain 0: [" + num(p.control_box.v_lo) + ", " +
         num(p.control_box.v_hi) + "]");
  if (!errors.empty()) return errors;

  fill_derived(p);

  // Sampled checks of the standing assumptions.
  rng::Key key(rng::label_seed(0xA11DA7AULL, "validate"));
  const int n_samples = 512;

  for (const auto* k : {&p.kernel1, &p.kernel2}) {
    const char* name = (k == &p.kernel1) ? "kernel1" : "kernel2";
    for (int i = 0; i < n_samples; ++i) {
      const double r = 20.0 * rng::uniform(key.with(1), i);
      const double v = kernel_eval(*k, r);
      if (v < p.theta_lo - 1e-15 || v > p.theta_hi + 1e-15) {
        fail(std::string(name) + " escapes [theta, Theta] at r = " + num(r) +
             ": value " + num(v));
        break;
      }
    }
  }

  if (std::abs(production_eval(p.f_spec, 0.0)) > 0.0) fail("f(0) != 0");
  {
    double prev_h = 0.0, prev_f = 0.0;
    bool bad = false;
    for (int i = 0; i < n_samples && !bad; ++i) {
      const double h1 = 50.0 * rng::uniform(key.with(2), 2 * i);
      const double h2 = 50.0 * rng::uniform(key.with(2), 2 * i + 1);
      const double f1 = production_eval(p.f_spec, h1);
      const double f2 = production_eval(p.f_spec, h2);
      if (std::abs(f1 - f2) > p.L_f * std::abs(h1 - h2) * (1.0 + 1e-12)) {
        fail("f violates Lipschitz bound L_f = " + num(p.L_f) + " at h = (" +
             num(h1) + ", " + num(h2) + ")");
        bad = true;
      }
      const double hs = 50.0 * static_cast<double>(i) / n_samples;
      const double fs = production_eval(p.f_spec, hs);
      if (hs > prev_h && fs < prev_f - 1e-15) {
        fail("f not nondecreasing near h = " + num(hs));
        bad = true;
      }
      prev_h = hs;
      prev_f = fs;
    }
  }

  for (int i = 0; i < n_samples; ++i) {
    const double x = -20.0 + 40.0 * rng::uniform(key.with(3), i);
    const double a = amenity_eval(p.A_spec, x);
    if (a < p.A_lo - 1e-15 || a > p.A_hi + 1e-15) {
      fail("A escapes [A_lo, A_hi] at x = " + num(x) + ": value " + num(a));
      break;
    }
  }

  if (std::abs(cost_eval(p.cost_spec, 0.0)) > 0.0) fail("a(0) != 0");
  for (int i = 0; i < n_samples; ++i) {
    // Midpoint strict convexity on K.
    const double u = p.control_box.v_lo +
                     (p.control_box.v_hi - p.control_box.v_lo) * rng::uniform(key.with(4), 2 * i);
    const double v = p.control_box.v_lo +
                     (p.control_box.v_hi - p.control_box.v_lo) * rng::uniform(key.with(4), 2 * i + 1);
    if (std::abs(u - v) < 1e-6) continue;
    const double mid = cost_eval(p.cost_spec, 0.5 * (u + v));
    const double chord = 0.5 * (cost_eval(p.cost_spec, u) + cost_eval(p.cost_spec, v));
    if (!(mid < chord)) {
      fail("a not strictly convex between v = " + num(u) + " and " + num(v));
      break;
    }
  }

  return errors;
}

std::vector<std::string> check_numerics(const NumericsParams& n) {
  std::vector<std::string> errors;
  if (n.n_particles < 1) errors.push_back("n_particles must be >= 1");
  if (n.n_time < 2) errors.push_back("n_time must be >= 2");
  if (n.grid.n_x < 8 || n.grid.n_y < 8) errors.push_back("grid counts must be >= 8");
  if (!(n.grid.x_min < n.grid.x_max)) errors.push_back("x_min must be < x_max");
  if (!(n.grid.y_min < n.grid.y_max)) errors.push_back("y_min must be < y_max");
  if (!(n.damping > 0.0 && n.damping <= 1.0)) errors.push_back("damping must be in (0,1]");
  if (!(n.tol_fp > 0.0)) errors.push_back("tol_fp must be > 0");
  if (n.max_iter < 1) errors.push_back("max_iter must be >= 1");
  if (n.mc_paths < 2) errors.push_back("mc_paths must be >= 2");
  if (n.threads < 1) errors.push_back("threads must be >= 1");
  if (!(n.mu0.x_sd >= 0.0 && n.mu0.h_log_sd >= 0.0))
    errors.push_back("mu0 standard deviations must be >= 0");
  if (!(n.mu0.zero_mass >= 0.0 && n.mu0.zero_mass <= 1.0))
    errors.push_back("mu0.zero_mass must be in [0,1]");
  return errors;
}

Scenario default_scenario() {
  Scenario s;
  auto errs = validate(s.model);
  if (!errs.empty()) throw std::logic_error("default scenario invalid: " + errs.front());
  // Closed-form mu0 moments: x ~ N(m, sd^2), h lognormal(lm, ls^2),
  // a zero_mass fraction pinned at h = 0.
  const Mu0Spec& m0 = s.numerics.mu0;
  const double live = 1.0 - m0.zero_mass;
  const double Eh2 = live * std::exp(2.0 * m0.h_log_mean + 2.0 * m0.h_log_sd * m0.h_log_sd);
  const double Ex2 = m0.x_mean * m0.x_mean + m0.x_sd * m0.x_sd;
  const HorizonConstants hc = horizon_constants_from_moments(Ex2 + Eh2, Eh2, s.model);
  s.model.horizon = 0.8 * hc.T_max;
  return s;
}

namespace {

using KV = std::map<std::string, std::string>;

bool to_double(const std::string& s, double* out) {
  try {
    std::size_t pos = 0;
    *out = std::stod(s, &pos);
    return pos == s.size();
  } catch (...) {
    return false;
  }
}

struct Reader {
  const KV& kv;
  std::vector<std::string>* errors;
  mutable std::set<std::string> used;

  void get(const char* key, double* out) const {
    auto it = kv.find(key);
    used.insert(key);
    if (it == kv.end()) return;
    if (!to_double(it->second, out) && errors)
      errors->push_back(std::string("bad numeric value for ") + key + ": " + it->second);
  }
  void get(const char* key, int* out) const {
    double v = *out;
    get(key, &v);
    *out = static_cast<int>(std::llround(v));
  }
  void get(const char* key, std::uint64_t* out) const {
    auto it = kv.find(key);
    used.insert(key);
    if (it == kv.end()) return;
    try {
      *out = std::stoull(it->second);
    } catch (...) {
      if (errors) errors->push_back(std::string("bad seed value: ") + it->second);
    }
  }
  void get(const char* key, std::string* out) const {
    auto it = kv.find(key);
    used.insert(key);
    if (it != kv.end()) *out = it->second;
  }
};

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

Scenario parse_config(const std::string& text, std::vector<std::string>* errors) {
  KV kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (errors) errors->push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }

  Scenario s = default_scenario();
  Reader r{kv, errors};
  ModelParams& p = s.model;
  r.get("rho", &p.rho);
  r.get("zeta", &p.zeta);
  r.get("chi", &p.chi);
  r.get("eps", &p.eps);
  r.get("gamma", &p.gamma);
  r.get("sigma", &p.sigma);
  r.get("horizon", &p.horizon);
  r.get("kernel1.floor", &p.kernel1.floor);
  r.get("kernel1.cap", &p.kernel1.cap);
  r.get("kernel1.length", &p.kernel1.length);
  r.get("kernel2.floor", &p.kernel2.floor);
  r.get("kernel2.cap", &p.kernel2.cap);
  r.get("kernel2.length", &p.kernel2.length);
  std::string f_kind = p.f_spec.kind == ProductionSpec::Kind::Linear ? "linear" : "saturating";
  r.get("f.kind", &f_kind);
  if (f_kind == "linear")
    p.f_spec.kind = ProductionSpec::Kind::Linear;
  else if (f_kind == "saturating")
    p.f_spec.kind = ProductionSpec::Kind::Saturating;
  else if (errors)
    errors->push_back("unknown f.kind: " + f_kind);
  r.get("f.beta", &p.f_spec.beta);
  r.get("f.h_sat", &p.f_spec.h_sat);
  r.get("A.lo", &p.A_spec.lo);
  r.get("A.hi", &p.A_spec.hi);
  r.get("A.length", &p.A_spec.length);
  r.get("cost.kappa", &p.cost_spec.kappa);
  r.get("cost.half_degree", &p.cost_spec.half_degree);
  r.get("control.v_lo", &p.control_box.v_lo);
  r.get("control.v_hi", &p.control_box.v_hi);

  NumericsParams& n = s.numerics;
  r.get("n_particles", &n.n_particles);
  r.get("n_time", &n.n_time);
  r.get("grid.x_min", &n.grid.x_min);
  r.get("grid.x_max", &n.grid.x_max);
  r.get("grid.y_min", &n.grid.y_min);
  r.get("grid.y_max", &n.grid.y_max);
  r.get("grid.n_x", &n.grid.n_x);
  r.get("grid.n_y", &n.grid.n_y);
  r.get("damping", &n.damping);
  r.get("tol_fp", &n.tol_fp);
  r.get("max_iter", &n.max_iter);
  r.get("seed", &n.seed);
  r.get("mc_paths", &n.mc_paths);
  r.get("threads", &n.threads);
  r.get("mu0.x_mean", &n.mu0.x_mean);
  r.get("mu0.x_sd", &n.mu0.x_sd);
  r.get("mu0.h_log_mean", &n.mu0.h_log_mean);
  r.get("mu0.h_log_sd", &n.mu0.h_log_sd);
  r.get("mu0.zero_mass", &n.mu0.zero_mass);

  if (errors)
    for (const auto& [key, value] : kv)
      if (!r.used.count(key)) errors->push_back("unknown key: " + key);

  if (errors) {
    auto model_errors = validate(s.model);
    errors->insert(errors->end(), model_errors.begin(), model_errors.end());
    auto num_errors = check_numerics(s.numerics);
    errors->insert(errors->end(), num_errors.begin(), num_errors.end());
  } else {
    validate(s.model);
  }
  return s;
}

Scenario load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::vector<std::string> errors;
  Scenario s = parse_config(ss.str(), &errors);
  if (!errors.empty()) {
    std::string msg = "invalid config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw std::runtime_error(msg);
  }
  return s;
}

std::string config_to_text(const Scenario& s) {
  std::ostringstream out;
  const ModelParams& p = s.model;
  const NumericsParams& n = s.numerics;
  auto w = [&](const char* k, double v) { out << k << " = " << format_g17(v) << "\n"; };
  auto wi = [&](const char* k, long long v) { out << k << " = " << v << "\n"; };
  w("rho", p.rho);
  w("zeta", p.zeta);
  w("chi", p.chi);
  w("eps", p.eps);
  w("gamma", p.gamma);
  w("sigma", p.sigma);
  w("horizon", p.horizon);
  w("kernel1.floor", p.kernel1.floor);
  w("kernel1.cap", p.kernel1.cap);
  w("kernel1.length", p.kernel1.length);
  w("kernel2.floor", p.kernel2.floor);
  w("kernel2.cap", p.kernel2.cap);
  w("kernel2.length", p.kernel2.length);
  out << "f.kind = "
      << (p.f_spec.kind == ProductionSpec::Kind::Linear ? "linear" : "saturating") << "\n";
  w("f.beta", p.f_spec.beta);
  w("f.h_sat", p.f_spec.h_sat);
  w("A.lo", p.A_spec.lo);
  w("A.hi", p.A_spec.hi);
  w("A.length", p.A_spec.length);
  w("cost.kappa", p.cost_spec.kappa);
  wi("cost.half_degree", p.cost_spec.half_degree);
  w("control.v_lo", p.control_box.v_lo);
  w("control.v_hi", p.control_box.v_hi);
  wi("n_particles", n.n_particles);
  wi("n_time", n.n_time);
  w("grid.x_min", n.grid.x_min);
  w("grid.x_max", n.grid.x_max);
  w("grid.y_min", n.grid.y_min);
  w("grid.y_max", n.grid.y_max);
  wi("grid.n_x", n.grid.n_x);
  wi("grid.n_y", n.grid.n_y);
  w("damping", n.damping);
  w("tol_fp", n.tol_fp);
  wi("max_iter", n.max_iter);
  out << "seed = " << n.seed << "\n";
  wi("mc_paths", n.mc_paths);
  wi("threads", n.threads);
  w("mu0.x_mean", n.mu0.x_mean);
  w("mu0.x_sd", n.mu0.x_sd);
  w("mu0.h_log_mean", n.mu0.h_log_mean);
  w("mu0.h_log_sd", n.mu0.h_log_sd);
  w("mu0.zero_mass", n.mu0.zero_mass);
  return out.str();
}

}  // namespace mfg
