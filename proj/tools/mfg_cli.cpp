// Command-line front end for the mean-field-game solver library.
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mfg/dynamics.hpp"
#include "mfg/hamiltonian.hpp"
#include "mfg/hjb.hpp"
#include "mfg/interaction.hpp"
#include "mfg/measures.hpp"
#include "mfg/mfg.hpp"
#include "mfg/params.hpp"
#include "mfg/rng.hpp"
#include "mfg/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum ExitCode { kOk = 0, kIoError = 1, kValidation = 2, kNotConverged = 3, kHorizon = 4 };

int log_level() {
  const char* env = std::getenv("MFG_LOG");
  if (!env) return 1;
  const std::string v(env);
  if (v == "error") return 0;
  if (v == "debug") return 2;
  return 1;
}

void log_info(const std::string& msg) {
  if (log_level() >= 1) std::cerr << "[info] " << msg << "\n";
}

// FNV-1a over the semantic config text.
std::string config_hash(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct Loaded {
  mfg::Scenario scenario;
  std::string text;
};

// Exit-code-aware config load; returns nonzero code on failure.
int load_scenario(const std::string& path, Loaded* out) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open config file: " << path << "\n";
    return kIoError;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  out->text = ss.str();
  std::vector<std::string> errors;
  out->scenario = mfg::parse_config(out->text, &errors);
  if (!errors.empty()) {
    std::cerr << "invalid config:\n";
    for (const auto& e : errors) std::cerr << "  " << e << "\n";
    return kValidation;
  }
  return kOk;
}

void write_manifest(const std::string& dir, const std::string& command,
                    const Loaded& loaded, const mfg::NumericsParams& numerics) {
  json m;
  m["command"] = command;
  m["config_hash"] = config_hash(mfg::config_to_text(loaded.scenario));
  m["seed"] = numerics.seed;
  m["threads"] = numerics.threads;
  m["version"] = "1.0.0";
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  m["timestamp_unix_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
  m["outputs"] = {"flow/", "value/", "report.json", "diagnostics.csv", "flow_moments.csv"};
  std::ofstream out(fs::path(dir) / "manifest.json");
  out << m.dump(2) << '\n';
}

std::ofstream open_out(const std::string& path, int* rc) {
  std::ofstream out(path);
  if (!out) {
    std::cerr << "error: cannot write " << path << "\n";
    *rc = kIoError;
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field-game solver: coupled HJB / Fokker-Planck fixed point"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  std::uint64_t seed_override = 0;
  bool seed_given = false;
  int threads_override = 0;

  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", config_path, "scenario config file")->required();
    if (needs_out) sub->add_option("--out", out_path, "output path")->required();
    sub->add_option("--seed", seed_override, "override config seed")
        ->each([&](const std::string&) { seed_given = true; });
    sub->add_option("--threads", threads_override, "override thread count");
  };

  auto* c_validate = app.add_subcommand("validate", "check a config file");
  c_validate->add_option("--config", config_path)->required();

  auto* c_solve = app.add_subcommand("solve-mfg", "run the fixed-point solver");
  add_common(c_solve, true);

  auto* c_ham = app.add_subcommand(
      "hamiltonian-probe", "CSV (p, H1, dpH1, s_bar) along a momentum sweep");
  add_common(c_ham, false);
  double probe_x = 0.0, probe_h = 1.0;
  c_ham->add_option("--x0", probe_x, "probe position");
  c_ham->add_option("--h0", probe_h, "probe capital");
  c_ham->add_option("--out", out_path, "output CSV (default stdout)");

  auto* c_sweep =
      app.add_subcommand("interaction-sweep", "CSV (x, F(x,mu)) over the grid range");
  add_common(c_sweep, false);
  c_sweep->add_option("--out", out_path, "output CSV (default stdout)");

  auto* c_w = app.add_subcommand("wasserstein", "distances between two measure CSVs");
  std::string file_a, file_b;
  c_w->add_option("--a", file_a, "first measure CSV")->required();
  c_w->add_option("--b", file_b, "second measure CSV")->required();

  auto* c_slice = app.add_subcommand(
      "hjb-slice", "solve the HJB against the frozen initial measure, dump the t=0 slice");
  add_common(c_slice, false);
  c_slice->add_option("--out", out_path, "output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  try {
    if (app.got_subcommand(c_w)) {
      mfg::EmpiricalMeasure a, b;
      try {
        a = mfg::load_measure_csv(file_a);
        b = mfg::load_measure_csv(file_b);
      } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIoError;
      }
      std::cout << "w1,w2\n"
                << mfg::format_g17(mfg::wasserstein1_capped(a, b, 0)) << ','
                << mfg::format_g17(mfg::wasserstein2_capped(a, b, 0)) << "\n";
      return kOk;
    }

    Loaded loaded;
    if (int rc = load_scenario(config_path, &loaded); rc != kOk) return rc;
    if (app.got_subcommand(c_validate)) {
      log_info("config valid");
      return kOk;
    }

    mfg::Scenario& sc = loaded.scenario;
    if (seed_given) sc.numerics.seed = seed_override;
    if (threads_override > 0) sc.numerics.threads = threads_override;
    mfg::set_thread_count(sc.numerics.threads);

    if (app.got_subcommand(c_solve)) {
      const mfg::ParticleEnsemble e0 = mfg::sample_initial(
          sc.numerics.mu0, sc.numerics.n_particles, sc.numerics.seed);
      const mfg::HorizonConstants hc = mfg::horizon_constants(e0.measure(), sc.model);
      if (!hc.t_max_infinite && sc.model.horizon > hc.T_max) {
        std::cerr << "error: horizon " << mfg::format_g17(sc.model.horizon)
                  << " exceeds admissible T_max = " << mfg::format_g17(hc.T_max) << "\n";
        return kHorizon;
      }
      log_info("starting fixed-point iteration");
      const mfg::MfgSolution sol = mfg::solve_mfg(e0, sc.model, sc.numerics);
      mfg::write_run_directory(sol, out_path);
      write_manifest(out_path, "solve-mfg", loaded, sc.numerics);
      log_info("verdict: " + sol.report.verdict);
      if (sol.report.horizon_violation) return kHorizon;
      return sol.report.verdict == "converged" ? kOk : kNotConverged;
    }

    // probe subcommands share the sampled initial measure
    const mfg::EmpiricalMeasure mu =
        mfg::sample_initial(sc.numerics.mu0, sc.numerics.n_particles, sc.numerics.seed)
            .measure();
    int rc = kOk;
    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
      file = open_out(out_path, &rc);
      if (rc != kOk) return rc;
      os = &file;
    }

    if (app.got_subcommand(c_ham)) {
      *os << "p,H1,dpH1,s_bar\n";
      const double F = mfg::interaction_F(sc.model, mu, probe_x);
      for (int i = 0; i <= 200; ++i) {
        const double p = 5.0 * i / 200.0;
        *os << mfg::format_g17(p) << ','
            << mfg::format_g17(mfg::H1(sc.model, probe_x, probe_h, F, p)) << ','
            << mfg::format_g17(mfg::dpH1(sc.model, probe_x, probe_h, F, p)) << ','
            << mfg::format_g17(mfg::s_bar(sc.model, probe_x, probe_h, F, p)) << '\n';
      }
      return kOk;
    }
    if (app.got_subcommand(c_sweep)) {
      *os << "x,F\n";
      const mfg::GridSpec& g = sc.numerics.grid;
      for (int i = 0; i < g.n_x; ++i) {
        const double x = g.x_min + (g.x_max - g.x_min) * i / (g.n_x - 1);
        *os << mfg::format_g17(x) << ','
            << mfg::format_g17(mfg::interaction_F(sc.model, mu, x)) << '\n';
      }
      return kOk;
    }
    if (app.got_subcommand(c_slice)) {
      mfg::MeasureFlow flow;
      const int nt = sc.numerics.n_time;
      flow.times.resize(nt + 1);
      flow.measures.assign(nt + 1, mu);
      for (int k = 0; k <= nt; ++k) flow.times[k] = sc.model.horizon * k / nt;
      const mfg::ValueField vf = mfg::solve_hjb(flow, sc.model, sc.numerics);
      *os << "x,y,w,dx_w,dy_w\n";
      for (int i = 0; i < vf.grid.n_x; ++i)
        for (int j = 0; j < vf.grid.n_y; ++j)
          *os << mfg::format_g17(vf.x_at(i)) << ',' << mfg::format_g17(vf.y_at(j)) << ','
              << mfg::format_g17(vf.w[vf.idx(0, i, j)]) << ','
              << mfg::format_g17(vf.dxw[vf.idx(0, i, j)]) << ','
              << mfg::format_g17(vf.dyw[vf.idx(0, i, j)]) << '\n';
      return kOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  }
  return kValidation;
}
