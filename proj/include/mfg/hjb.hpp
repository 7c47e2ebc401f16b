#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mfg/dynamics.hpp"
#include "mfg/measures.hpp"
#include "mfg/params.hpp"

namespace mfg {

// Discrete value function w(t, x, y) = V(t, x, e^y) on the space-time grid,
// with stored difference-quotient gradients.
struct ValueField {
  GridSpec grid;
  int n_time = 0;
  double T = 0.0;
  std::vector<double> w, dxw, dyw;  // [time][x][y]
  std::string scheme;
  long long negative_nodes = 0;      // w < 0 repairs (must stay 0)
  long long monotonicity_nodes = 0;  // d_y w < 0 violations (must stay 0)
  mutable long long clamped_queries = 0;  // gradient queries outside the hull

  std::size_t idx(int k, int i, int j) const {
    return (static_cast<std::size_t>(k) * grid.n_x + i) * grid.n_y + j;
  }
  double x_at(int i) const {
    return grid.x_min + (grid.x_max - grid.x_min) * i / (grid.n_x - 1);
  }
  double y_at(int j) const {
    return grid.y_min + (grid.y_max - grid.y_min) * j / (grid.n_y - 1);
  }
  double t_at(int k) const { return T * k / n_time; }

  // Interpolated value and gradients (D_xV, D_hV) at a physical point;
  // clamped to the hull (counted) outside.
  double value(double t, double x, double h) const;
  Gradients gradients(double t, double x, double h) const;
};

// Backward finite-difference solve of the transformed HJB equation against
// an exogenous measure flow. Throws std::runtime_error naming the required
// time resolution when the explicit CFL bound fails.
ValueField solve_hjb(const MeasureFlow& mu_flow, const ModelParams& params,
                     const NumericsParams& numerics);

// Feedback policy (v*, s*) read off a value field and the measure flow.
Policy feedback_policy(std::shared_ptr<const ValueField> field,
                       std::shared_ptr<const MeasureFlow> mu_flow,
                       const ModelParams& params,
                       std::shared_ptr<const FlowFContext> fctx = nullptr);

GradientFn gradient_fn(std::shared_ptr<const ValueField> field);

struct McValue {
  double estimate = 0.0;
  double std_error = 0.0;
};

// Monte Carlo policy evaluation of the discounted objective from flow time
// index t0_index.
McValue mc_value(std::size_t t0_index, double x0, double h0, const MeasureFlow& mu_flow,
                 const Policy& policy, const ModelParams& params, int n_paths,
                 std::uint64_t seed, const FlowFContext* shared_fctx = nullptr);

// CSV-per-slice dump (x, y, w, dx_w, dy_w) plus an index file.
void save_value_field(const ValueField& field, const std::string& dir);

}  // namespace mfg
