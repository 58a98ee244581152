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
#include <cstdio>
#include <functional>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcc_lmpc/common.hpp"
#include "pcc_lmpc/grade_estimator.hpp"
#include "pcc_lmpc/lmpc_controller.hpp"
#include "pcc_lmpc/memory.hpp"
#include "pcc_lmpc/ocp_solver.hpp"
#include "pcc_lmpc/route.hpp"
#include "pcc_lmpc/vehicle_model.hpp"

namespace pcc {

struct BaselineParams {
  double v_ref{10.0};
  double kp{0.3};
  double a_dec{1.5};
};

struct CampaignConfig {
  std::string route_file;
  VehicleParams vehicle;
  FuelParams fuel;
  ControllerConfig controller;  // route_length, vehicle and fuel are filled in from the above
  int iterations{8};
  BaselineParams baseline;
  ArrivalTolerance arrival;
  std::size_t grade_memory{5};  // iterations of grade observations kept
  std::string output_dir{"out"};
  unsigned seed{0};  // reserved
  int oracle_max_sqp_iterations{200};  // the whole trip needs more than one MPC solve

  // Full-horizon solves use the controller's solver settings with their own
  // iteration cap.
  OcpOptions oracle_options() const {
    OcpOptions o = controller.solver;
    o.max_sqp_iterations = oracle_max_sqp_iterations;
    return o;
  }

  // Effective controller settings for a route of the given length.
  ControllerConfig controller_for(double route_length) const {
    ControllerConfig c = controller;
    c.route_length = route_length;
    c.vehicle = vehicle;
    c.fuel = fuel;
    c.arrival = arrival;
    return c;
  }

  void validate(double route_length) const {
    if (iterations < 1) throw std::invalid_argument("campaign: iterations must be >= 1");
    if (!(baseline.v_ref > 0.0)) throw std::invalid_argument("campaign: baseline speed must be positive");
    vehicle.validate();
    fuel.validate();
    controller_for(route_length).validate();
    const double budget = 0.9 * controller.N_f * vehicle.t_s;
    if (!(route_length / baseline.v_ref < budget)) {
      std::ostringstream msg;
      msg << "campaign: baseline speed " << baseline.v_ref << " m/s needs "
          << route_length / baseline.v_ref << " s for " << route_length
          << " m, more than 90% of the " << controller.N_f * vehicle.t_s << " s budget";
      throw std::invalid_argument(msg.str());
    }
  }
};

// Proportional speed tracking with a stopping ramp towards s_f.
inline ControlInput baseline_controller(const VehicleState& x, int /*t*/, double v_ref,
                                        double route_length, const VehicleParams& p,
                                        double kp = 0.3, double a_dec = 1.5) {
  const double target =
      std::min(v_ref, std::sqrt(2.0 * a_dec * std::max(0.0, route_length - x.s)));
  const double f = kp * p.m * (target - x.v) / p.t_s;
  return saturate({std::max(f, 0.0), std::min(f, 0.0)}, p);
}

using Controller = std::function<ControlInput(const VehicleState&, int, StepDiagnostics&)>;

// Closes the loop until arrival or N_f, feeding grade observations to the
// store, and finalizes the log. Throws IterationFailure on a late trip.
inline IterationLog run_iteration(const Controller& controller, const RouteProfile& route,
                                  const VehicleParams& p, const FuelParams& fuel, int N_f,
                                  int iteration, ObservationStore& store,
                                  const ArrivalTolerance& tol = {}) {
  RawTrip raw;
  raw.iteration = iteration;
  store.begin_iteration(iteration);
  PlantState ps = make_plant({0.0, 0.0, 0.0}, route.length(), tol);
  raw.x.push_back(ps.x);
  while (!ps.arrived && ps.k < N_f) {
    StepDiagnostics diag;
    const ControlInput u = saturate(controller(ps.x, ps.k, diag), p);
    const PlantState next = plant_step(ps, u, route, p, tol);
    raw.u.push_back(u);
    raw.diag.push_back(diag);
    raw.theta_true.push_back(grade_at(route, ps.x.s));
    if (auto obs = invert_grade(ps.x, next.x, p)) {
      obs->iteration = iteration;
      store.add(*obs);
      raw.theta_bar.push_back(obs->theta_bar);
    } else {
      raw.theta_bar.push_back(std::numeric_limits<double>::quiet_NaN());
    }
    ps = next;
    raw.x.push_back(ps.x);
  }
  raw.theta_true.push_back(grade_at(route, ps.x.s));
  raw.theta_bar.push_back(std::numeric_limits<double>::quiet_NaN());
  raw.arrived = ps.arrived;
  raw.arrival_step = ps.arrived ? ps.k : -1;
  if (!ps.arrived) {
    std::ostringstream msg;
    msg << "iteration " << iteration << " did not arrive within " << N_f << " steps; final state s = "
        << ps.x.s << " m, v = " << ps.x.v << " m/s, remaining " << route.length() - ps.x.s << " m";
    throw IterationFailure(msg.str());
  }
  return finalize_iteration(raw, N_f, route.length(), fuel, tol);
}

struct IterationSummary {
  int iteration{0};
  double total_fuel{0.0};
  double normalized_fuel{0.0};
  int arrival_step{0};
  int fallback_steps{0};
  double mean_solver_iterations{0.0};
  std::string trajectory_file;
};

struct CampaignReport {
  std::string route;
  double route_length{0.0};
  int N{0};
  int N_f{0};
  double t_s{0.0};
  double lookahead_m{0.0};
  double baseline_v_ref{0.0};
  std::vector<IterationSummary> iterations;
};

struct CampaignResult {
  std::vector<IterationLog> logs;
  CampaignReport report;
};

inline IterationSummary summarize(const IterationLog& log, double baseline_fuel) {
  IterationSummary s;
  s.iteration = log.iteration;
  s.total_fuel = log.total_cost();
  s.normalized_fuel = baseline_fuel > 0.0 ? s.total_fuel / baseline_fuel : 1.0;
  s.arrival_step = log.arrival_step;
  int solved = 0;
  long total = 0;
  for (int k = 0; k < log.arrival_step; ++k) {
    const auto& d = log.diag[static_cast<std::size_t>(k)];
    if (d.fallback) ++s.fallback_steps;
    if (d.status != SolverStatus::not_run) {
      ++solved;
      total += d.sqp_iterations;
    }
  }
  s.mean_solver_iterations = solved ? static_cast<double>(total) / solved : 0.0;
  char name[32];
  std::snprintf(name, sizeof(name), "iter_%02d.csv", log.iteration);
  s.trajectory_file = name;
  return s;
}

using ProgressFn = std::function<void(const IterationSummary&)>;

// Iteration 0 with the baseline tracker, then LMPC iterations 1..J, each
// learning from the one before.
inline CampaignResult run_campaign(const CampaignConfig& cfg, const RouteProfile& route,
                                   const ProgressFn& progress = {}) {
  cfg.validate(route.length());
  const ControllerConfig ccfg = cfg.controller_for(route.length());
  const int N_f = ccfg.N_f;
  CampaignResult out;
  out.report.route = cfg.route_file;
  out.report.route_length = route.length();
  out.report.N = ccfg.N;
  out.report.N_f = N_f;
  out.report.t_s = cfg.vehicle.t_s;
  out.report.lookahead_m = ccfg.lookahead_m;
  out.report.baseline_v_ref = cfg.baseline.v_ref;

  ObservationStore store(cfg.grade_memory);
  const Controller baseline = [&](const VehicleState& x, int t, StepDiagnostics&) {
    return baseline_controller(x, t, cfg.baseline.v_ref, route.length(), cfg.vehicle,
                               cfg.baseline.kp, cfg.baseline.a_dec);
  };
  out.logs.push_back(
      run_iteration(baseline, route, cfg.vehicle, cfg.fuel, N_f, 0, store, cfg.arrival));
  const double base_fuel = out.logs.front().total_cost();
  out.report.iterations.push_back(summarize(out.logs.front(), base_fuel));
  if (progress) progress(out.report.iterations.back());

  for (int j = 1; j <= cfg.iterations; ++j) {
    ControllerState cs;
    const LearningData data{&out.logs.back(), &store};
    const Controller lmpc = [&](const VehicleState& x, int t, StepDiagnostics& diag) {
      const ControlInput u = control_step(x, t, cs, ccfg, data);
      diag = cs.diag;
      return u;
    };
    IterationLog log = run_iteration(lmpc, route, cfg.vehicle, cfg.fuel, N_f, j, store, cfg.arrival);
    out.logs.push_back(std::move(log));
    out.report.iterations.push_back(summarize(out.logs.back(), base_fuel));
    if (progress) progress(out.report.iterations.back());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence.

inline constexpr const char* kLogHeader =
    "iter,k,s_m,v_mps,F_N,Ft_N,Fb_N,fuel,theta_true_rad,theta_bar_rad,solver_status,fallback";

inline void write_iteration_csv(std::ostream& out, const IterationLog& log) {
  out << kLogHeader << '\n';
  out << std::setprecision(12);
  for (int k = 0; k < log.steps(); ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const auto& x = log.x[ku];
    const auto& u = log.u[ku];
    out << log.iteration << ',' << k << ',' << x.s << ',' << x.v << ',' << x.F << ',' << u.F_t << ','
        << u.F_b << ',' << log.stage_cost[ku] << ',' << log.theta_true[ku] << ',';
    if (std::isnan(log.theta_bar[ku])) {
      out << "nan";
    } else {
      out << log.theta_bar[ku];
    }
    out << ',' << to_string(log.diag[ku].status) << ',' << (log.diag[ku].fallback ? 1 : 0) << '\n';
  }
}

class LogParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& cell, const std::string& where) {
  if (cell == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw LogParseError(where + ": bad number '" + cell + "'");
  }
}

// Reads a log written by write_iteration_csv. Cost-to-go is recomputed from
// the stage costs; arrival is the first step from which the trip stays at
// rest with zero cost and input.
inline IterationLog read_iteration_csv(std::istream& in, const std::string& source = "<log>") {
  std::string line;
  if (!std::getline(in, line) || line != kLogHeader) {
    throw LogParseError(source + ": missing or unexpected header");
  }
  IterationLog log;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(row);
    const auto cells = split_csv_line(line);
    if (cells.size() != 12) throw LogParseError(where + ": expected 12 fields");
    const int iter = static_cast<int>(parse_number(cells[0], where));
    const int k = static_cast<int>(parse_number(cells[1], where));
    if (k != log.steps()) throw LogParseError(where + ": steps out of order");
    if (k == 0) log.iteration = iter;
    log.x.push_back({parse_number(cells[2], where), parse_number(cells[3], where),
                     parse_number(cells[4], where)});
    log.u.push_back({parse_number(cells[5], where), parse_number(cells[6], where)});
    log.stage_cost.push_back(parse_number(cells[7], where));
    log.theta_true.push_back(parse_number(cells[8], where));
    log.theta_bar.push_back(parse_number(cells[9], where));
    StepDiagnostics d;
    try {
      d.status = solver_status_from_string(cells[10]);
    } catch (const std::invalid_argument& e) {
      throw LogParseError(where + ": " + e.what());
    }
    d.fallback = cells[11] == "1";
    log.diag.push_back(d);
  }
  if (log.x.empty()) throw LogParseError(source + ": no rows");
  log.horizon = log.steps() - 1;
  log.cost_to_go = suffix_cost(log.stage_cost);
  // Padding rows repeat the final state; the arrival state itself only lies
  // within tolerance of it.
  int arrival = log.horizon;
  while (arrival > 0 && log.stage_cost[static_cast<std::size_t>(arrival - 1)] == 0.0 &&
         log.u[static_cast<std::size_t>(arrival - 1)] == ControlInput{} &&
         log.x[static_cast<std::size_t>(arrival)] == log.x.back()) {
    --arrival;
  }
  log.arrival_step = arrival;
  return log;
}

inline constexpr const char* kFuelSeriesHeader =
    "iter,total_fuel,normalized_fuel,arrival_step,fallback_steps";

inline void write_fuel_series_csv(std::ostream& out, const CampaignReport& report) {
  out << kFuelSeriesHeader << '\n' << std::setprecision(12);
  for (const auto& it : report.iterations) {
    out << it.iteration << ',' << it.total_fuel << ',' << it.normalized_fuel << ','
        << it.arrival_step << ',' << it.fallback_steps << '\n';
  }
}

// ---------------------------------------------------------------------------
// Oracles.

struct OracleResult {
  std::vector<VehicleState> x;
  std::vector<ControlInput> u;
  double objective{kInf};
  SolverStatus status{SolverStatus::not_run};
  int iterations{0};
  double max_violation{0.0};

  bool available() const { return status == SolverStatus::optimal; }
};

// Whole trip as one problem: N_f steps, both ends pinned, true grade.
inline OracleResult full_horizon_oracle(const CampaignConfig& cfg, const RouteProfile& route,
                                        const std::vector<ControlInput>& warm_start,
                                        const OcpOptions& opt) {
  OracleResult out;
  const int N_f = cfg.controller.N_f;
  const VehicleState goal = goal_state(route.length());
  if (route.length() <= 0.0) {
    out.x.assign(static_cast<std::size_t>(N_f) + 1, goal);
    out.u.assign(static_cast<std::size_t>(N_f), ControlInput{});
    out.objective = 0.0;
    out.status = SolverStatus::optimal;
    return out;
  }
  OcpProblem prob;
  prob.N = N_f;
  prob.vehicle = cfg.vehicle;
  prob.fuel = cfg.fuel;
  prob.grade = [&route](double s) { return route.sample(std::max(s, 0.0)); };
  prob.s_max = route.length();
  prob.position_scale = route.length();
  prob.pins.push_back({N_f, goal});
  std::vector<ControlInput> warm = warm_start;
  warm.resize(static_cast<std::size_t>(N_f), ControlInput{});
  const OcpSolution sol = solve_ocp(prob, warm, opt);
  out.x = sol.x;
  out.u = sol.u;
  out.objective = sol.objective;
  out.status = sol.status;
  out.iterations = sol.iterations;
  out.max_violation = sol.max_violation;
  return out;
}

inline OracleResult full_horizon_oracle(const CampaignConfig& cfg, const RouteProfile& route,
                                        const std::vector<ControlInput>& warm_start) {
  return full_horizon_oracle(cfg, route, warm_start, cfg.oracle_options());
}

// Iteration-0 baseline inputs, the natural warm start for the oracle.
inline std::vector<ControlInput> baseline_inputs(const CampaignConfig& cfg, const RouteProfile& route) {
  ObservationStore scratch;
  const Controller baseline = [&](const VehicleState& x, int t, StepDiagnostics&) {
    return baseline_controller(x, t, cfg.baseline.v_ref, route.length(), cfg.vehicle,
                               cfg.baseline.kp, cfg.baseline.a_dec);
  };
  const IterationLog log = run_iteration(baseline, route, cfg.vehicle, cfg.fuel,
                                         cfg.controller.N_f, 0, scratch, cfg.arrival);
  return {log.u.begin(), log.u.end() - 1};
}

struct DpGrid {
  int n_s{101};
  int n_v{41};
  int n_F{21};
  int n_u{13};      // input levels over [F_min, F_max]
  int hold{5};      // steps each input is held
  double v_max{0.0};  // 0 = vehicle v_max
};

struct DpResult {
  double objective{kInf};
  double slack{0.0};  // nearest-node error estimate for the objective
  int stages{0};
  std::vector<double> value;  // stage-0 value table, index (i_s, i_v, i_F)
  DpGrid grid;

  bool available() const { return std::isfinite(objective); }
};

// Backward dynamic programming on a regular (s, v, F) grid with inputs held
// for `hold` plant steps and nearest-node projection. The goal set at the
// final stage is the node nearest x_f.
inline DpResult dp_oracle(const CampaignConfig& cfg, const RouteProfile& route, const DpGrid& grid) {
  const VehicleParams& p = cfg.vehicle;
  const int N_f = cfg.controller.N_f;
  if (grid.n_s < 2 || grid.n_v < 2 || grid.n_F < 2 || grid.n_u < 2 || grid.hold < 1) {
    throw std::invalid_argument("dp_oracle: grid needs at least two points per axis");
  }
  const long nodes = static_cast<long>(grid.n_s) * grid.n_v * grid.n_F;
  if (nodes > 100000) throw std::invalid_argument("dp_oracle: more than 1e5 grid nodes");
  if (N_f % grid.hold != 0) throw std::invalid_argument("dp_oracle: hold must divide N_f");

  DpResult out;
  out.grid = grid;
  out.stages = N_f / grid.hold;
  const double L = route.length();
  const double v_top = grid.v_max > 0.0 ? grid.v_max : p.v_max;
  const double ds = L / (grid.n_s - 1);
  const double dv = v_top / (grid.n_v - 1);
  const double dF = (p.F_max - p.F_min) / (grid.n_F - 1);
  const auto node_s = [&](int i) { return i * ds; };
  const auto node_v = [&](int j) { return j * dv; };
  const auto node_F = [&](int l) { return p.F_min + l * dF; };
  const auto nearest = [](double x, double lo, double h, int n) {
    return std::clamp(static_cast<int>(std::lround((x - lo) / h)), 0, n - 1);
  };
  const auto index = [&](int i, int j, int l) {
    return (static_cast<std::size_t>(i) * grid.n_v + j) * grid.n_F + l;
  };
  const int goal_l = nearest(0.0, p.F_min, dF, grid.n_F);

  // One held-input transition from every node, shared by all stages.
  struct Edge {
    std::size_t next;
    double cost;
  };
  std::vector<std::vector<Edge>> edges(static_cast<std::size_t>(nodes));
  for (int i = 0; i < grid.n_s; ++i) {
    for (int j = 0; j < grid.n_v; ++j) {
      for (int l = 0; l < grid.n_F; ++l) {
        auto& out_edges = edges[index(i, j, l)];
        for (int a = 0; a < grid.n_u; ++a) {
          const double cmd = p.F_min + a * (p.F_max - p.F_min) / (grid.n_u - 1);
          const ControlInput u{std::max(cmd, 0.0), std::min(cmd, 0.0)};
          VehicleState x{node_s(i), node_v(j), node_F(l)};
          double cost = 0.0;
          bool ok = true;
          for (int m = 0; m < grid.hold; ++m) {
            cost += fuel_rate(x.v, u.F_t, cfg.fuel);
            x = step_dynamics(x, u, grade_at(route, std::min(x.s, L)), p);
            if (x.v > v_top + 1e-9 || x.s > L + 0.5 * ds) {
              ok = false;
              break;
            }
          }
          if (!ok) continue;
          out_edges.push_back({index(nearest(x.s, 0.0, ds, grid.n_s), nearest(x.v, 0.0, dv, grid.n_v),
                                     nearest(x.F, p.F_min, dF, grid.n_F)),
                               cost});
        }
      }
    }
  }

  std::vector<double> V(static_cast<std::size_t>(nodes), kInf);
  V[index(grid.n_s - 1, 0, goal_l)] = 0.0;
  std::vector<double> next(V.size());
  for (int stage = out.stages - 1; stage >= 0; --stage) {
    for (std::size_t n = 0; n < V.size(); ++n) {
      double best = kInf;
      for (const Edge& e : edges[n]) best = std::min(best, e.cost + V[e.next]);
      next[n] = best;
    }
    V.swap(next);
  }
  out.value = V;
  out.objective = V[index(0, 0, goal_l)];

  // Largest value change between finite neighbours along each axis, times the
  // half spacing, accumulated over the stages.
  double lip[3] = {0.0, 0.0, 0.0};
  for (int i = 0; i < grid.n_s; ++i) {
    for (int j = 0; j < grid.n_v; ++j) {
      for (int l = 0; l < grid.n_F; ++l) {
        const double here = V[index(i, j, l)];
        if (!std::isfinite(here)) continue;
        const std::size_t nb[3] = {i + 1 < grid.n_s ? index(i + 1, j, l) : index(i, j, l),
                                   j + 1 < grid.n_v ? index(i, j + 1, l) : index(i, j, l),
                                   l + 1 < grid.n_F ? index(i, j, l + 1) : index(i, j, l)};
        for (int d = 0; d < 3; ++d) {
          if (std::isfinite(V[nb[d]])) lip[d] = std::max(lip[d], std::abs(V[nb[d]] - here));
        }
      }
    }
  }
  out.slack = 0.5 * out.stages * (lip[0] + lip[1] + lip[2]);
  return out;
}

}  // namespace pcc
