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

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcc_lmpc/common.hpp"
#include "pcc_lmpc/grade_estimator.hpp"
#include "pcc_lmpc/memory.hpp"
#include "pcc_lmpc/ocp_solver.hpp"
#include "pcc_lmpc/route.hpp"
#include "pcc_lmpc/vehicle_model.hpp"

namespace pcc {

struct ControllerConfig {
  int N{20};
  int N_f{600};
  double lookahead_m{150.0};
  int refit_every{1};
  double lambda_reg{1e-9};
  double route_length{0.0};
  VehicleParams vehicle;
  FuelParams fuel;
  ArrivalTolerance arrival;
  OcpOptions solver;
  // Any solver outcome is applied when its scaled violation is below this.
  double accept_violation{1e-6};
  double fallback_kp{0.3};
  double fallback_a_dec{1.5};  // stopping ramp that caps the fallback target

  void validate() const {
    if (N < 1 || N > N_f) {
      throw std::invalid_argument("controller: need 1 <= N <= N_f, got N = " + std::to_string(N) +
                                  ", N_f = " + std::to_string(N_f));
    }
    if (!(lookahead_m > 0.0)) throw std::invalid_argument("controller: lookahead must be positive");
    if (refit_every < 1) throw std::invalid_argument("controller: refit_every must be >= 1");
    if (!(route_length >= 0.0)) throw std::invalid_argument("controller: negative route length");
    if (!(fallback_kp > 0.0)) throw std::invalid_argument("controller: fallback gain must be positive");
    if (!(fallback_a_dec > 0.0)) throw std::invalid_argument("controller: fallback deceleration must be positive");
    vehicle.validate();
    fuel.validate();
  }
};

struct ControllerState {
  SafeSetModel model;
  GradeCoeffs grade;
  std::optional<OcpSolution> last;  // warm start for the next step
  bool fallback_engaged{false};
  int last_refit{-1};
  StepDiagnostics diag;
};

// Previous iteration and the pooled grade observations the controller learns from.
struct LearningData {
  const IterationLog* previous{nullptr};
  const ObservationStore* observations{nullptr};
};

// Absolute steps t + k >= N_f are pinned to the goal.
inline std::vector<int> pinned_steps(int t, const ControllerConfig& cfg) {
  std::vector<int> out;
  for (int k = std::max(1, cfg.N_f - t); k <= cfg.N; ++k) out.push_back(k);
  return out;
}

inline OcpProblem build_ocp(const VehicleState& x_t, int t, const ControllerState& cs,
                            const ControllerConfig& cfg) {
  if (t >= cfg.N_f) {
    throw ContractViolation("build_ocp: t = " + std::to_string(t) + " is past the budget N_f = " +
                            std::to_string(cfg.N_f));
  }
  OcpProblem prob;
  prob.N = cfg.N;
  prob.x0 = x_t;
  prob.vehicle = cfg.vehicle;
  prob.fuel = cfg.fuel;
  prob.grade = coeff_grade(cs.grade);
  prob.s_max = cfg.route_length;
  prob.position_scale = std::max(cfg.route_length, 1.0);
  const VehicleState goal = goal_state(cfg.route_length);
  for (int k : pinned_steps(t, cfg)) prob.pins.push_back({k, goal});
  if (prob.pins.empty() || prob.pins.back().step != cfg.N) {
    prob.terminal_manifold = cs.model.Lambda;
    // A previous trip may stop slightly past s_f inside the arrival
    // tolerance; a floor above s_max would make every step infeasible.
    prob.s_floor = std::min(cs.model.s_floor, cfg.route_length);
    prob.terminal_cost = cs.model.Delta;
  }
  return prob;
}

// Proportional tracking of the previous trip's manifold speed. The target is
// capped by a stopping ramp to s_f: the manifold is a local fit and can ask
// for speed the vehicle cannot shed before the goal.
inline ControlInput fallback_input(const VehicleState& x_t, const ControllerState& cs,
                                   const ControllerConfig& cfg) {
  const VehicleParams& p = cfg.vehicle;
  const double ramp = std::sqrt(2.0 * cfg.fallback_a_dec * std::max(0.0, cfg.route_length - x_t.s));
  const double v_ref = std::clamp(std::min(cs.model.manifold_v(x_t.s), ramp), 0.0, p.v_max);
  const double f = cfg.fallback_kp * p.m * (v_ref - x_t.v) / p.t_s;
  return saturate({std::max(f, 0.0), std::min(f, 0.0)}, p);
}

namespace detail {

inline std::vector<ControlInput> shifted_warm_start(const ControllerState& cs,
                                                    const VehicleState& x_t,
                                                    const ControllerConfig& cfg) {
  std::vector<ControlInput> warm;
  if (cs.last && static_cast<int>(cs.last->u.size()) == cfg.N) {
    warm.assign(cs.last->u.begin() + 1, cs.last->u.end());
    warm.push_back(cs.last->u.back());
    return warm;
  }
  // Cold start: roll the fallback law through the model.
  VehicleState x = x_t;
  for (int k = 0; k < cfg.N; ++k) {
    const ControlInput u = fallback_input(x, cs, cfg);
    warm.push_back(u);
    x = step_dynamics(x, u, eval_grade(cs.grade, x.s), cfg.vehicle);
  }
  return warm;
}

}  // namespace detail

inline void refresh_models(const VehicleState& x_t, int t, ControllerState& cs,
                           const ControllerConfig& cfg, const LearningData& data) {
  if (cs.last_refit >= 0 && t - cs.last_refit < cfg.refit_every) return;
  if (data.observations) {
    cs.grade = fit_local_quadratic(*data.observations, x_t.s, cfg.lookahead_m, cfg.lambda_reg).coeffs;
  }
  if (!data.previous) throw ContractViolation("controller: no previous iteration to learn from");
  cs.model = build_safe_set_model(*data.previous, x_t.s, t + cfg.N, cfg.lookahead_m, cfg.vehicle,
                                  cfg.lambda_reg);
  cs.last_refit = t;
}

// Status alone is too strict: a converged solve can end a hair above the
// solver's feasibility tolerance on the terminal equalities.
inline bool usable(const OcpSolution& sol, const ControllerConfig& cfg) {
  if (sol.u.empty() || sol.status == SolverStatus::not_run) return false;
  if (sol.status == SolverStatus::optimal) return true;
  return sol.max_violation <= cfg.accept_violation;
}

inline ControlInput control_step(const VehicleState& x_t, int t, ControllerState& cs,
                                 const ControllerConfig& cfg, const LearningData& data) {
  cs.diag = StepDiagnostics{};
  if (is_arrived(x_t, cfg.route_length, cfg.arrival)) {
    cs.last.reset();
    return ControlInput{};
  }
  refresh_models(x_t, t, cs, cfg, data);
  const OcpProblem prob = build_ocp(x_t, t, cs, cfg);
  OcpSolution sol = solve_ocp(prob, detail::shifted_warm_start(cs, x_t, cfg), cfg.solver);
  cs.diag.status = sol.status;
  cs.diag.sqp_iterations = sol.iterations;
  cs.diag.kkt_residual = sol.kkt_residual;
  if (usable(sol, cfg)) {
    const ControlInput u = sol.u.front();
    cs.fallback_engaged = false;
    cs.last = std::move(sol);
    return u;
  }
  cs.fallback_engaged = true;
  cs.diag.fallback = true;
  cs.last.reset();
  return fallback_input(x_t, cs, cfg);
}

}  // namespace pcc
