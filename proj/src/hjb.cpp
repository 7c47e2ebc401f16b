#include "mfg/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>

#include "mfg/hamiltonian.hpp"
#include "mfg/interaction.hpp"
#include "mfg/util.hpp"

namespace fs = std::filesystem;

namespace mfg {

namespace {

// Thomas algorithm; overwrites d with the solution.
void tridiag_solve(std::vector<double>& a, std::vector<double>& b, std::vector<double>& c,
                   std::vector<double>& d) {
  const std::size_t n = b.size();
  for (std::size_t i = 1; i < n; ++i) {
    const double m = a[i] / b[i - 1];
    b[i] -= m * c[i - 1];
    d[i] -= m * d[i - 1];
  }
  d[n - 1] /= b[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) d[i] = (d[i] - c[i] * d[i + 1]) / b[i];
}

}  // namespace

double ValueField::value(double t, double x, double h) const {
  const double y = h > 0.0 ? std::log(h) : grid.y_min - 1.0;
  auto clamp_frac = [this](double v, double lo, double hi, int n, int* i0) {
    double s = (v - lo) / (hi - lo) * (n - 1);
    if (s < 0.0 || s > n - 1.0) ++clamped_queries;
    s = std::clamp(s, 0.0, static_cast<double>(n - 1));
    *i0 = std::min(static_cast<int>(s), n - 2);
    return s - *i0;
  };
  int k0, i0, j0;
  double tk = t / T * n_time;
  if (tk < 0.0 || tk > n_time) ++clamped_queries;
  tk = std::clamp(tk, 0.0, static_cast<double>(n_time));
  k0 = std::min(static_cast<int>(tk), n_time - 1);
  const double ft = tk - k0;
  const double fx = clamp_frac(x, grid.x_min, grid.x_max, grid.n_x, &i0);
  const double fy = clamp_frac(y, grid.y_min, grid.y_max, grid.n_y, &j0);
  auto tri = [&](const std::vector<double>& a) {
    double acc = 0.0;
    for (int dk = 0; dk < 2; ++dk)
      for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj)
          acc += (dk ? ft : 1 - ft) * (di ? fx : 1 - fx) * (dj ? fy : 1 - fy) *
                 a[idx(k0 + dk, i0 + di, j0 + dj)];
    return acc;
  };
  return tri(w);
}

Gradients ValueField::gradients(double t, double x, double h) const {
  Gradients g;
  if (h <= 0.0) return g;  // V(t, x, 0) = 0 along the boundary
  const double y = std::log(h);
  auto clamp_frac = [this](double v, double lo, double hi, int n, int* i0) {
    double s = (v - lo) / (hi - lo) * (n - 1);
    if (s < 0.0 || s > n - 1.0) ++clamped_queries;
    s = std::clamp(s, 0.0, static_cast<double>(n - 1));
    *i0 = std::min(static_cast<int>(s), n - 2);
    return s - *i0;
  };
  int k0, i0, j0;
  double tk = t / T * n_time;
  if (tk < 0.0 || tk > n_time) ++clamped_queries;
  tk = std::clamp(tk, 0.0, static_cast<double>(n_time));
  k0 = std::min(static_cast<int>(tk), n_time - 1);
  const double ft = tk - k0;
  const double fx = clamp_frac(x, grid.x_min, grid.x_max, grid.n_x, &i0);
  const double fy = clamp_frac(y, grid.y_min, grid.y_max, grid.n_y, &j0);
  auto tri = [&](const std::vector<double>& a) {
    double acc = 0.0;
    for (int dk = 0; dk < 2; ++dk)
      for (int di = 0; di < 2; ++di)
        for (int dj = 0; dj < 2; ++dj)
          acc += (dk ? ft : 1 - ft) * (di ? fx : 1 - fx) * (dj ? fy : 1 - fy) *
                 a[idx(k0 + dk, i0 + di, j0 + dj)];
    return acc;
  };
  g.dx = tri(dxw);
  // D_hV = e^{-y} d_y w with y clamped to the grid hull
  const double y_eff = std::clamp(y, grid.y_min, grid.y_max);
  g.dh = std::exp(-y_eff) * tri(dyw);
  return g;
}

ValueField solve_hjb(const MeasureFlow& mu_flow, const ModelParams& params,
                     const NumericsParams& numerics) {
  check_flow(mu_flow);
  const int nt = static_cast<int>(mu_flow.size()) - 1;
  if (nt < 1) throw std::invalid_argument("need at least two flow times");
  const GridSpec& gs = numerics.grid;
  const int nx = gs.n_x, ny = gs.n_y;
  const double T = mu_flow.times.back();
  const double dt = T / nt;
  const double dx = (gs.x_max - gs.x_min) / (nx - 1);
  const double dy = (gs.y_max - gs.y_min) / (ny - 1);
  const double chi2h = 0.5 * params.chi * params.chi;

  ValueField vf;
  vf.grid = gs;
  vf.n_time = nt;
  vf.T = T;
  vf.scheme = "godunov-upwind + lie-split implicit diffusion";
  vf.w.assign(static_cast<std::size_t>(nt + 1) * nx * ny, 0.0);
  vf.dxw.assign(vf.w.size(), 0.0);
  vf.dyw.assign(vf.w.size(), 0.0);

  // Exact interaction values at every (time, x-node).
  std::vector<double> Fgrid(static_cast<std::size_t>(nt + 1) * nx, 0.0);
  parallel_for(0, static_cast<std::size_t>(nt + 1) * nx, [&](std::size_t q) {
    const std::size_t k = q / nx, i = q % nx;
    Fgrid[q] = interaction_F(params, mu_flow.measures[k], vf.x_at(static_cast<int>(i)));
  });

  // CFL for the explicit Hamiltonian stage.
  double F_max = 0.0;
  for (double f : Fgrid) F_max = std::max(F_max, f);
  const double speed_y = std::max(params.zeta + chi2h,
                                  std::abs(params.L_f * F_max - params.zeta - chi2h));
  const double cfl = dt * (params.B_bar / dx + speed_y / dy);
  if (cfl > 0.9) {
    const int need = static_cast<int>(
        std::ceil(T * (params.B_bar / dx + speed_y / dy) / 0.9));
    throw std::runtime_error("CFL bound violated (" + format_g17(cfl) +
                             " > 0.9): increase n_time to at least " +
                             std::to_string(need));
  }

  const double ax = dt * 0.5 * params.eps * params.eps / (dx * dx);
  const double ay = dt * chi2h / (dy * dy);

  std::vector<double> star(static_cast<std::size_t>(nx) * ny);
  std::vector<double> cur(static_cast<std::size_t>(nx) * ny, 0.0);
  auto at = [&](std::vector<double>& a, int i, int j) -> double& {
    return a[static_cast<std::size_t>(i) * ny + j];
  };

  std::vector<double> h_of(ny), einv(ny);
  for (int j = 0; j < ny; ++j) {
    h_of[j] = std::exp(vf.y_at(j));
    einv[j] = std::exp(-vf.y_at(j));
  }

  for (int k = nt - 1; k >= 0; --k) {
    // explicit Godunov stage on slice k+1, interaction at time t_k
    parallel_for(0, static_cast<std::size_t>(nx) * ny, [&](std::size_t q) {
      const int i = static_cast<int>(q / ny), j = static_cast<int>(q % ny);
      if (j == 0) {  // Dirichlet: V(t, x, 0) = 0
        star[q] = 0.0;
        return;
      }
      const double wc = at(cur, i, j);
      const double qxp = (i + 1 < nx ? at(cur, i + 1, j) - wc : 0.0) / dx;
      const double qxm = (i > 0 ? wc - at(cur, i - 1, j) : 0.0) / dx;
      const double qyp = (j + 1 < ny ? at(cur, i, j + 1) - wc : 0.0) / dy;
      const double qym = (wc - at(cur, i, j - 1)) / dy;

      // H0 with upwind difference per candidate velocity
      double ham_x = 0.0;  // v = 0 candidate: 0*q - a(0) = 0
      for (double v : {dpH0(params, qxp), dpH0(params, qxm)}) {
        const double qq = v > 0.0 ? qxp : qxm;
        ham_x = std::max(ham_x, v * qq - cost_eval(params.cost_spec, v));
      }

      // transformed capital Hamiltonian: sup_s [ B1(s) q_y + U(s) ] with
      // B1(s) = s f(h) F e^{-y} - zeta - chi^2/2
      const double x = vf.x_at(i);
      const double h = h_of[j];
      const double F = Fgrid[static_cast<std::size_t>(k) * nx + i];
      const double fF = production_eval(params.f_spec, h) * F * einv[j];
      const double drift0 = -params.zeta - chi2h;
      auto cand = [&](double s) {
        const double b1 = s * fF + drift0;
        return b1 * (b1 > 0.0 ? qyp : qym) + running_utility(params, x, h, s, F);
      };
      double ham_y = cand(0.0);
      for (double qy : {qyp, qym}) {
        const double s = s_bar(params, x, h, F, einv[j] * qy);
        if (s > 0.0) ham_y = std::max(ham_y, cand(s));
      }
      star[q] = wc + dt * (ham_x + ham_y);
    });

    // implicit x diffusion + discount, Neumann ends, per y-line j >= 1
    parallel_for(1, static_cast<std::size_t>(ny), [&](std::size_t js) {
      const int j = static_cast<int>(js);
      std::vector<double> a(nx, -ax), b(nx), c(nx, -ax), d(nx);
      for (int i = 0; i < nx; ++i) {
        b[i] = 1.0 + dt * params.rho + 2.0 * ax;
        d[i] = at(star, i, j);
      }
      b[0] -= ax;
      b[nx - 1] -= ax;
      tridiag_solve(a, b, c, d);
      for (int i = 0; i < nx; ++i) at(star, i, j) = d[i];
    });

    // implicit y diffusion: Dirichlet at y_min, Neumann at y_max
    parallel_for(0, static_cast<std::size_t>(nx), [&](std::size_t is) {
      const int i = static_cast<int>(is);
      const int m = ny - 1;  // unknowns j = 1..ny-1
      std::vector<double> a(m, -ay), b(m, 1.0 + 2.0 * ay), c(m, -ay), d(m);
      for (int j = 1; j < ny; ++j) d[j - 1] = at(star, i, j);
      b[m - 1] -= ay;  // Neumann cap
      tridiag_solve(a, b, c, d);
      at(cur, i, 0) = 0.0;
      for (int j = 1; j < ny; ++j) at(cur, i, j) = d[j - 1];
    });

    // store slice and difference-quotient gradients
    parallel_for(0, static_cast<std::size_t>(nx) * ny, [&](std::size_t q) {
      const int i = static_cast<int>(q / ny), j = static_cast<int>(q % ny);
      const double wc = at(cur, i, j);
      vf.w[vf.idx(k, i, j)] = wc;
      const double gxp = i + 1 < nx ? at(cur, i + 1, j) : wc;
      const double gxm = i > 0 ? at(cur, i - 1, j) : wc;
      vf.dxw[vf.idx(k, i, j)] = (gxp - gxm) / ((i > 0 && i + 1 < nx) ? 2 * dx : dx);
      const double gyp = j + 1 < ny ? at(cur, i, j + 1) : wc;
      const double gym = j > 0 ? at(cur, i, j - 1) : wc;
      vf.dyw[vf.idx(k, i, j)] = (gyp - gym) / ((j > 0 && j + 1 < ny) ? 2 * dy : dy);
    });
    for (int i = 0; i < nx; ++i)
      for (int j = 0; j < ny; ++j) {
        const double wc = at(cur, i, j);
        if (wc < 0.0) ++vf.negative_nodes;
        if (j + 1 < ny && at(cur, i, j + 1) - wc < -1e-12 * std::max(1.0, std::abs(wc)))
          ++vf.monotonicity_nodes;
      }
  }
  return vf;
}

GradientFn gradient_fn(std::shared_ptr<const ValueField> field) {
  return [field](double t, double x, double h) { return field->gradients(t, x, h); };
}

Policy feedback_policy(std::shared_ptr<const ValueField> field,
                       std::shared_ptr<const MeasureFlow> mu_flow,
                       const ModelParams& params,
                       std::shared_ptr<const FlowFContext> fctx) {
  if (!fctx) fctx = std::make_shared<const FlowFContext>(params, *mu_flow);
  const double dtf = mu_flow->times.size() > 1
                         ? mu_flow->times[1] - mu_flow->times[0]
                         : 1.0;
  const ModelParams p = params;
  return [field, mu_flow, fctx, dtf, p](double t, double x, double h) {
    Control c;
    const Gradients g = field->gradients(t, x, h);
    c.v = dpH0(p, g.dx);
    const std::size_t k = std::min(
        fctx->size() - 1,
        static_cast<std::size_t>(std::max(0.0, std::round(t / dtf))));
    c.s = s_bar(p, x, h, fctx->at(k).F(x), g.dh);
    return c;
  };
}

McValue mc_value(std::size_t t0_index, double x0, double h0, const MeasureFlow& mu_flow,
                 const Policy& policy, const ModelParams& params, int n_paths,
                 std::uint64_t seed, const FlowFContext* shared_fctx) {
  std::optional<FlowFContext> own;
  if (!shared_fctx) own.emplace(params, mu_flow);
  const FlowFContext& fctx = shared_fctx ? *shared_fctx : *own;
  const PathBundle pb = simulate_controlled(x0, h0, t0_index, policy, mu_flow, params,
                                            n_paths, seed, "mc-value", &fctx);
  const std::size_t n_steps = pb.times.size() - 1;
  const double t0 = pb.times.front();
  std::vector<double> payoff(pb.paths(), 0.0);
  parallel_for(0, pb.paths(), [&](std::size_t i) {
    NeumaierSum acc;
    std::vector<double> integrand(n_steps + 1);
    for (std::size_t kk = 0; kk <= n_steps; ++kk) {
      const double t = pb.times[kk];
      const double F = fctx.at(t0_index + kk).F(pb.x[i][kk]);
      const double u = running_utility(params, pb.x[i][kk], pb.h[i][kk], pb.s[i][kk], F) -
                       cost_eval(params.cost_spec, pb.v[i][kk]);
      integrand[kk] = std::exp(-params.rho * (t - t0)) * u;
    }
    for (std::size_t kk = 0; kk < n_steps; ++kk)
      acc.add(0.5 * (integrand[kk] + integrand[kk + 1]) * (pb.times[kk + 1] - pb.times[kk]));
    payoff[i] = acc.value();
  });
  McValue mv;
  NeumaierSum mean, var;
  for (double v : payoff) mean.add(v);
  mv.estimate = mean.value() / static_cast<double>(payoff.size());
  for (double v : payoff) var.add(sqr(v - mv.estimate));
  if (payoff.size() > 1)
    mv.std_error = std::sqrt(var.value() / (static_cast<double>(payoff.size()) *
                                            (static_cast<double>(payoff.size()) - 1.0)));
  return mv;
}

void save_value_field(const ValueField& field, const std::string& dir) {
  fs::create_directories(dir);
  std::ofstream index(fs::path(dir) / "index.csv");
  if (!index) throw std::runtime_error("cannot write value-field index in " + dir);
  index << "step,time,file\n";
  for (int k = 0; k <= field.n_time; ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "t%05d.csv", k);
    index << k << ',' << format_g17(field.t_at(k)) << ',' << name << '\n';
    std::ofstream out(fs::path(dir) / name);
    if (!out) throw std::runtime_error("cannot write value slice in " + dir);
    out << "x,y,w,dx_w,dy_w\n";
    for (int i = 0; i < field.grid.n_x; ++i)
      for (int j = 0; j < field.grid.n_y; ++j)
        out << format_g17(field.x_at(i)) << ',' << format_g17(field.y_at(j)) << ','
            << format_g17(field.w[field.idx(k, i, j)]) << ','
            << format_g17(field.dxw[field.idx(k, i, j)]) << ','
            << format_g17(field.dyw[field.idx(k, i, j)]) << '\n';
  }
}

}  // namespace mfg
