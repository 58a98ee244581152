// Copyright 2026 The pcc_lmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "pcc_lmpc/common.hpp"
#include "pcc_lmpc/polyfit.hpp"
#include "pcc_lmpc/route.hpp"
#include "pcc_lmpc/solver_status.hpp"
#include "pcc_lmpc/vehicle_model.hpp"

namespace pcc {

struct StepDiagnostics {
  SolverStatus status{SolverStatus::not_run};
  int sqp_iterations{0};
  double kkt_residual{0.0};
  bool fallback{false};
};

// A trip as recorded by the simulation loop, steps 0..arrival_step.
struct RawTrip {
  int iteration{0};
  bool arrived{false};
  int arrival_step{-1};
  std::vector<VehicleState> x;   // arrival_step + 1 states
  std::vector<ControlInput> u;   // applied inputs, one per step before arrival
  std::vector<double> theta_true;
  std::vector<double> theta_bar;  // NaN where the observation was rejected
  std::vector<StepDiagnostics> diag;
};

// One completed trip padded to the time budget. Every array has N_f + 1
// entries; entries past arrival_step hold x_f with zero input and cost.
struct IterationLog {
  int iteration{0};
  int arrival_step{0};
  int horizon{0};  // N_f
  std::vector<VehicleState> x;
  std::vector<ControlInput> u;
  std::vector<double> stage_cost;
  std::vector<double> cost_to_go;
  std::vector<double> theta_true;
  std::vector<double> theta_bar;
  std::vector<StepDiagnostics> diag;

  double total_cost() const { return cost_to_go.empty() ? 0.0 : cost_to_go.front(); }
  int steps() const { return static_cast<int>(x.size()); }
};

inline VehicleState goal_state(double route_length) { return {route_length, 0.0, 0.0}; }

// Suffix sums J_k = sum_{i >= k} h_i.
inline std::vector<double> suffix_cost(const std::vector<double>& stage) {
  std::vector<double> J(stage.size() + 1, 0.0);
  for (std::size_t k = stage.size(); k-- > 0;) J[k] = J[k + 1] + stage[k];
  J.pop_back();
  return J;
}

// Pads a successful trip to N_f, computes costs and checks the log invariants.
// Throws IterationFailure when the trip did not arrive in time.
inline IterationLog finalize_iteration(const RawTrip& raw, int horizon, double route_length,
                                       const FuelParams& fuel, const ArrivalTolerance& tol = {}) {
  if (!raw.arrived || raw.arrival_step < 0) {
    throw IterationFailure("iteration " + std::to_string(raw.iteration) +
                           " did not arrive within the time budget of " +
                           std::to_string(horizon) + " steps");
  }
  if (raw.arrival_step > horizon) {
    throw IterationFailure("iteration " + std::to_string(raw.iteration) + " arrived at step " +
                           std::to_string(raw.arrival_step) + " past the budget " +
                           std::to_string(horizon));
  }
  const std::size_t T = static_cast<std::size_t>(raw.arrival_step);
  if (raw.x.size() != T + 1 || raw.u.size() < T) {
    throw std::invalid_argument("finalize_iteration: log arrays do not match the arrival step");
  }
  if (!is_arrived(raw.x[T], route_length, tol)) {
    throw IterationFailure("iteration " + std::to_string(raw.iteration) +
                           ": final state is outside the goal tolerance");
  }

  const std::size_t n = static_cast<std::size_t>(horizon) + 1;
  IterationLog log;
  log.iteration = raw.iteration;
  log.arrival_step = raw.arrival_step;
  log.horizon = horizon;
  log.x.assign(n, goal_state(route_length));
  log.u.assign(n, ControlInput{});
  log.stage_cost.assign(n, 0.0);
  log.theta_true.assign(n, 0.0);
  log.theta_bar.assign(n, std::numeric_limits<double>::quiet_NaN());
  log.diag.assign(n, StepDiagnostics{});

  for (std::size_t k = 0; k <= T; ++k) {
    log.x[k] = raw.x[k];
    if (k < raw.theta_true.size()) log.theta_true[k] = raw.theta_true[k];
    if (k < raw.theta_bar.size()) log.theta_bar[k] = raw.theta_bar[k];
    if (k < raw.diag.size()) log.diag[k] = raw.diag[k];
  }
  for (std::size_t k = 0; k < T; ++k) {
    log.u[k] = raw.u[k];
    log.stage_cost[k] = fuel_rate(std::max(raw.x[k].v, 0.0), raw.u[k].F_t, fuel);
  }
  for (std::size_t k = T + 1; k < n; ++k) {
    log.theta_true[k] = log.theta_true[T];
  }
  log.cost_to_go = suffix_cost(log.stage_cost);

  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (log.cost_to_go[k] < log.cost_to_go[k + 1]) {
      throw std::logic_error("finalize_iteration: cost-to-go increased along the trip");
    }
  }
  return log;
}

// ---------------------------------------------------------------------------
// Exact time-sampled safe set over stored iterations.

struct SafeSetEntry {
  VehicleState x;
  int iteration{0};
  int step{0};
  double cost_to_go{0.0};
};

struct SafeSetQuery {
  bool member{false};
  double q{kInf};
  int iteration{-1};  // argmin tag, -1 when not a member
  int step{-1};
};

class ExactSafeSet {
 public:
  explicit ExactSafeSet(double match_tol = 1e-9) : match_tol_(match_tol) {}

  void add(const IterationLog& log) {
    for (int k = 0; k < log.steps(); ++k) {
      entries_.push_back({log.x[k], log.iteration, k, log.cost_to_go[k]});
    }
    horizon_ = std::max(horizon_, log.horizon);
  }

  // Membership in SS_time(t) and the minimum stored cost-to-go over all
  // occurrences of x at steps >= t.
  SafeSetQuery query(const VehicleState& x, int t) const {
    SafeSetQuery out;
    for (const auto& e : entries_) {
      if (e.step < t || !matches(e.x, x)) continue;
      if (!out.member || e.cost_to_go < out.q) {
        out.member = true;
        out.q = e.cost_to_go;
        out.iteration = e.iteration;
        out.step = e.step;
      }
    }
    return out;
  }

  // Distinct states of SS_time(t).
  std::vector<VehicleState> members(int t) const {
    std::vector<VehicleState> out;
    for (const auto& e : entries_) {
      if (e.step < t) continue;
      const bool seen = std::any_of(out.begin(), out.end(),
                                    [&](const VehicleState& y) { return matches(y, e.x); });
      if (!seen) out.push_back(e.x);
    }
    return out;
  }

  const std::vector<SafeSetEntry>& entries() const { return entries_; }
  int horizon() const { return horizon_; }

 private:
  bool matches(const VehicleState& a, const VehicleState& b) const {
    return std::abs(a.s - b.s) <= match_tol_ && std::abs(a.v - b.v) <= match_tol_ &&
           std::abs(a.F - b.F) <= match_tol_;
  }

  double match_tol_;
  int horizon_{0};
  std::vector<SafeSetEntry> entries_;
};

inline SafeSetQuery exact_ss_query(const ExactSafeSet& ess, const VehicleState& x, int t) {
  return ess.query(x, t);
}

// ---------------------------------------------------------------------------
// Relaxed safe set: quadratic manifold for (v, F) and cubic cost-to-go, both
// fitted to the previous iteration around the current position.

struct SafeSetModel {
  Eigen::Matrix<double, 2, 3> Lambda = Eigen::Matrix<double, 2, 3>::Zero();  // rows v, F
  Eigen::Vector4d Delta = Eigen::Vector4d::Zero();
  double s_floor{0.0};
  double s_fit_lo{0.0};
  double s_fit_hi{0.0};
  bool degenerate{false};  // window was empty, model pinned at the goal
  double manifold_residual{0.0};  // max fit residual, normalized by v_max / F_max
  double cost_residual{0.0};      // max |C(s_k) - J_k| over the window
  double optimality_residual{0.0};

  double manifold_v(double s) const { return Lambda(0, 0) + s * (Lambda(0, 1) + s * Lambda(0, 2)); }
  double manifold_F(double s) const { return Lambda(1, 0) + s * (Lambda(1, 1) + s * Lambda(1, 2)); }
  double cost(double s) const { return Delta[0] + s * (Delta[1] + s * (Delta[2] + s * Delta[3])); }
  double cost_slope(double s) const { return Delta[1] + s * (2.0 * Delta[2] + 3.0 * s * Delta[3]); }
};

namespace detail {

struct FitWindow {
  std::vector<double> s, v, F, J;
};

inline FitWindow collect_window(const IterationLog& prev, double s_now, double lookahead) {
  FitWindow w;
  for (int k = 0; k < prev.steps(); ++k) {
    const double s = prev.x[k].s;
    if (s < s_now || s > s_now + lookahead) continue;
    w.s.push_back(s);
    w.v.push_back(prev.x[k].v);
    w.F.push_back(prev.x[k].F);
    w.J.push_back(prev.cost_to_go[k]);
  }
  return w;
}

}  // namespace detail

// Position of the previous trip at the time the terminal state will occur.
inline double safe_set_floor(const IterationLog& prev, int terminal_step) {
  const int k = std::clamp(std::min(terminal_step, prev.arrival_step), 0, prev.steps() - 1);
  return prev.x[k].s;
}

struct ManifoldFit {
  Eigen::Matrix<double, 2, 3> Lambda = Eigen::Matrix<double, 2, 3>::Zero();
  double s_floor{0.0};
  bool degenerate{false};
  double residual_v{0.0};
  double residual_F{0.0};
  double optimality_residual{0.0};
};

inline ManifoldFit fit_safe_set_manifold(const IterationLog& prev, double s_now, int terminal_step,
                                         double lookahead, double lambda_reg = 1e-9) {
  ManifoldFit out;
  out.s_floor = safe_set_floor(prev, terminal_step);
  // From the previous arrival on, that trip sits at x_f, so the floor is s_f
  // and the only stored state left is x_f itself. A quadratic through the
  // stopping segment does not reach it.
  if (terminal_step >= prev.arrival_step) {
    out.degenerate = true;
    return out;
  }
  const auto w = detail::collect_window(prev, s_now, lookahead);
  if (w.s.empty()) {
    out.degenerate = true;
    return out;
  }
  const PolyFit fv = fit_polynomial(w.s, w.v, 2, s_now, lookahead, lambda_reg);
  const PolyFit fF = fit_polynomial(w.s, w.F, 2, s_now, lookahead, lambda_reg);
  out.Lambda.row(0) = fv.coeffs.transpose();
  out.Lambda.row(1) = fF.coeffs.transpose();
  out.residual_v = fv.max_residual;
  out.residual_F = fF.max_residual;
  out.optimality_residual = std::max(fv.optimality_residual, fF.optimality_residual);
  return out;
}

struct CostFit {
  Eigen::Vector4d Delta = Eigen::Vector4d::Zero();
  bool empty{false};
  double max_residual{0.0};
  double optimality_residual{0.0};
};

inline CostFit fit_cost_to_go(const IterationLog& prev, double s_now, double lookahead,
                              double lambda_reg = 1e-9) {
  CostFit out;
  const auto w = detail::collect_window(prev, s_now, lookahead);
  if (w.s.empty()) {
    out.empty = true;
    return out;
  }
  const PolyFit fit = fit_polynomial(w.s, w.J, 3, s_now, lookahead, lambda_reg);
  out.Delta = fit.coeffs;
  out.max_residual = fit.max_residual;
  out.optimality_residual = fit.optimality_residual;
  return out;
}

inline SafeSetModel build_safe_set_model(const IterationLog& prev, double s_now, int terminal_step,
                                         double lookahead, const VehicleParams& p,
                                         double lambda_reg = 1e-9) {
  const ManifoldFit mf = fit_safe_set_manifold(prev, s_now, terminal_step, lookahead, lambda_reg);
  const CostFit cf = fit_cost_to_go(prev, s_now, lookahead, lambda_reg);
  SafeSetModel model;
  model.Lambda = mf.Lambda;
  model.Delta = cf.Delta;
  model.s_floor = mf.s_floor;
  model.s_fit_lo = s_now;
  model.s_fit_hi = s_now + lookahead;
  model.degenerate = mf.degenerate;
  model.manifold_residual = std::max(mf.residual_v / p.v_max, mf.residual_F / p.F_max);
  model.cost_residual = cf.max_residual;
  model.optimality_residual = std::max(mf.optimality_residual, cf.optimality_residual);
  return model;
}

// Relaxed terminal cost: C(s) on the manifold at or past s_floor, +inf
// elsewhere. Membership uses normalized tolerance (v / v_max, F / F_max).
inline double q_hat(const VehicleState& x, const SafeSetModel& model, const VehicleParams& p,
                    double manifold_tol = 1e-3) {
  if (x.s < model.s_floor) return kInf;
  const double dv = std::abs(x.v - model.manifold_v(x.s)) / p.v_max;
  const double dF = std::abs(x.F - model.manifold_F(x.s)) / p.F_max;
  if (dv > manifold_tol || dF > manifold_tol) return kInf;
  return model.cost(x.s);
}

}  // namespace pcc
