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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pcc_lmpc/common.hpp"
#include "pcc_lmpc/grade_model.hpp"
#include "pcc_lmpc/qp_solver.hpp"
#include "pcc_lmpc/solver_status.hpp"
#include "pcc_lmpc/vehicle_model.hpp"

namespace pcc {

// Grade seen by the prediction model as a function of position.
using GradeField = std::function<GradeSample(double s)>;

inline GradeField coeff_grade(const GradeCoeffs& c) {
  return [c](double s) { return sample_grade(c, s); };
}

struct PinnedState {
  int step{0};
  VehicleState x;
};

// Optional tracking-style stage terms added to the fuel cost.
struct QuadraticStageCost {
  double q_v{0.0};
  double v_ref{0.0};
  double r_t{0.0};
  double r_b{0.0};
};

// Finite-horizon problem over inputs u_0..u_{N-1} and states x_0..x_N.
//
// A step k whose start and end are both pinned to the same standstill state is
// a hold step: its input is fixed at zero and the state does not move. This is
// how the goal is kept once reached, since the unclamped model would otherwise
// let rolling resistance push a stopped vehicle backwards.
struct OcpProblem {
  int N{1};
  VehicleState x0;
  VehicleParams vehicle;
  FuelParams fuel;
  double fuel_weight{1.0};
  QuadraticStageCost quadratic;
  GradeField grade;  // empty means a flat road

  double s_max{kInf};
  double position_scale{1.0};  // scaling of s in tolerances, usually the route length
  std::vector<PinnedState> pins;

  // v_N = Lambda.row(0) [1 s_N s_N^2]', F_N = Lambda.row(1) [1 s_N s_N^2]'.
  std::optional<Eigen::Matrix<double, 2, 3>> terminal_manifold;
  double s_floor{-kInf};
  Eigen::Vector4d terminal_cost = Eigen::Vector4d::Zero();  // C(s_N), cubic

  GradeSample grade_at(double s) const { return grade ? grade(s) : GradeSample{}; }

  void validate() const {
    vehicle.validate();
    fuel.validate();
    if (N < 1) throw std::invalid_argument("OCP horizon must be at least 1");
    if (!(position_scale > 0.0)) throw std::invalid_argument("OCP position scale must be positive");
    if (!(fuel_weight >= 0.0) || quadratic.q_v < 0.0 || quadratic.r_t < 0.0 ||
        quadratic.r_b < 0.0) {
      throw std::invalid_argument("OCP cost weights must be nonnegative");
    }
    require_finite(x0.s, "initial position");
    require_finite(x0.v, "initial velocity");
    require_finite(x0.F, "initial force");
    for (const auto& pin : pins) {
      if (pin.step < 0 || pin.step > N) throw std::invalid_argument("pinned step outside [0, N]");
    }
    if (!terminal_cost.allFinite()) throw std::invalid_argument("terminal cost must be finite");
    if (terminal_manifold && !terminal_manifold->allFinite()) {
      throw std::invalid_argument("terminal manifold must be finite");
    }
  }
};

struct OcpOptions {
  double trust_radius{0.2};
  double max_trust_radius{2.0};
  double penalty{1e3};
  int max_sqp_iterations{30};
  double step_tol{1e-6};
  double kkt_tol{1e-5};
  double feasibility_tol{1e-8};
  double accept_ratio{1e-4};
  double regularization{1e-6};
  double qp_tol{1e-8};
  std::string qp_dump_prefix;  // when set, every QP is written to <prefix>_<iter>.txt
};

struct OcpSolution {
  std::vector<VehicleState> x;  // N + 1
  std::vector<ControlInput> u;  // N
  double objective{kInf};
  SolverStatus status{SolverStatus::not_run};
  double kkt_residual{kInf};
  double max_violation{kInf};
  int iterations{0};
  std::vector<double> merit_history;  // merit of every accepted incumbent, starting point first
};

struct ViolationSummary {
  double l1{0.0};
  double max{0.0};

  void add(double v) {
    if (v <= 0.0) return;
    l1 += v;
    max = std::max(max, v);
  }
};

namespace detail {

inline std::vector<std::optional<VehicleState>> pin_table(const OcpProblem& prob) {
  std::vector<std::optional<VehicleState>> out(static_cast<std::size_t>(prob.N) + 1);
  for (const auto& pin : prob.pins) out[static_cast<std::size_t>(pin.step)] = pin.x;
  return out;
}

inline std::vector<bool> hold_steps(const OcpProblem& prob) {
  const auto pins = pin_table(prob);
  std::vector<bool> hold(static_cast<std::size_t>(prob.N), false);
  for (std::size_t k = 0; k < hold.size(); ++k) {
    const auto& a = pins[k];
    const auto& b = pins[k + 1];
    hold[k] = a && b && *a == *b && a->v == 0.0 && a->F == 0.0;
  }
  return hold;
}

inline double eval_cubic(const Eigen::Vector4d& c, double s) {
  return c[0] + s * (c[1] + s * (c[2] + s * c[3]));
}

inline double eval_cubic_slope(const Eigen::Vector4d& c, double s) {
  return c[1] + s * (2.0 * c[2] + 3.0 * s * c[3]);
}

inline double eval_quadratic(const Eigen::Matrix<double, 1, 3>& c, double s) {
  return c[0] + s * (c[1] + s * c[2]);
}

inline double eval_quadratic_slope(const Eigen::Matrix<double, 1, 3>& c, double s) {
  return c[1] + 2.0 * s * c[2];
}

}  // namespace detail

inline double ocp_stage_cost(const OcpProblem& prob, const VehicleState& x, const ControlInput& u) {
  const auto& q = prob.quadratic;
  const double dv = x.v - q.v_ref;
  return prob.fuel_weight * detail::fuel_poly(x.v, u.F_t, prob.fuel) +
         0.5 * (q.q_v * dv * dv + q.r_t * u.F_t * u.F_t + q.r_b * u.F_b * u.F_b);
}

// States produced by applying u from x0 with the prediction model.
inline std::vector<VehicleState> ocp_rollout(const OcpProblem& prob,
                                             const std::vector<ControlInput>& u) {
  if (u.size() != static_cast<std::size_t>(prob.N)) {
    throw std::invalid_argument("ocp_rollout: input sequence length must equal N");
  }
  const auto hold = detail::hold_steps(prob);
  std::vector<VehicleState> x(u.size() + 1);
  x[0] = prob.x0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    x[k + 1] = hold[k] ? x[k] : model_step(x[k], u[k], prob.grade_at(x[k].s).theta, prob.vehicle);
  }
  return x;
}

inline double ocp_objective(const OcpProblem& prob, const std::vector<VehicleState>& x,
                            const std::vector<ControlInput>& u) {
  double f = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) f += ocp_stage_cost(prob, x[k], u[k]);
  return f + detail::eval_cubic(prob.terminal_cost, x.back().s);
}

// The input reaches F after one step, v after two and s after three. Bounds on
// earlier states are fixed by x0 and are not imposed.
inline constexpr std::size_t kFirstVelocityRow = 2;
inline constexpr std::size_t kFirstPositionRow = 3;

// Scaled violation of the state constraints of a rolled-out trajectory.
inline ViolationSummary ocp_violation(const OcpProblem& prob, const std::vector<VehicleState>& x) {
  const auto& p = prob.vehicle;
  const double ss = prob.position_scale;
  ViolationSummary out;
  for (std::size_t k = 1; k < x.size(); ++k) {
    out.add((x[k].F - p.F_max) / p.F_max);
    out.add((p.F_min - x[k].F) / p.F_max);
    if (k >= kFirstVelocityRow) {
      out.add(-x[k].v / p.v_max);
      out.add((x[k].v - p.v_max) / p.v_max);
    }
    if (k >= kFirstPositionRow) out.add((x[k].s - prob.s_max) / ss);
  }
  for (const auto& pin : prob.pins) {
    const auto& xk = x[static_cast<std::size_t>(pin.step)];
    out.add(std::abs(xk.s - pin.x.s) / ss);
    out.add(std::abs(xk.v - pin.x.v) / p.v_max);
    out.add(std::abs(xk.F - pin.x.F) / p.F_max);
  }
  const VehicleState& xN = x.back();
  if (prob.terminal_manifold) {
    const auto& L = *prob.terminal_manifold;
    out.add(std::abs(xN.v - detail::eval_quadratic(L.row(0), xN.s)) / p.v_max);
    out.add(std::abs(xN.F - detail::eval_quadratic(L.row(1), xN.s)) / p.F_max);
  }
  out.add((prob.s_floor - xN.s) / ss);
  return out;
}

namespace detail {

// Trust-region SQP in the inputs only. States are always the nonlinear
// rollout, so dynamics hold exactly and every state constraint enters the QP
// through its sensitivity to the inputs. Rows violated at the incumbent and
// all equalities carry an elastic slack priced at the penalty weight, so the
// QP is always feasible and its model matches the l1 merit function.
//
// The QP Hessian is the reduced Hessian of the Lagrangian: stage-cost
// curvature plus the curvature of the dynamics and terminal rows weighted by
// adjoints of the previous multipliers, projected onto the PSD cone. The
// bilinear speed/traction term of the fuel map is left out; it is indefinite,
// and its projection adds curvature the objective does not have.
class SqpSolver {
 public:
  SqpSolver(const OcpProblem& prob, const OcpOptions& opt)
      : prob_(prob), opt_(opt), p_(prob.vehicle), N_(prob.N), n_(2 * prob.N) {
    hold_ = hold_steps(prob);
    pins_ = pin_table(prob);
    lo_ = Eigen::VectorXd::Zero(n_);
    hi_ = Eigen::VectorXd::Zero(n_);
    for (int k = 0; k < N_; ++k) {
      if (hold_[static_cast<std::size_t>(k)]) continue;
      hi_[2 * k] = 1.0;
      lo_[2 * k + 1] = p_.F_min / p_.F_max;
    }
    for (int k = 1; k <= N_; ++k) {
      specs_.push_back({kFHi, k, false});
      specs_.push_back({kFLo, k, false});
      if (static_cast<std::size_t>(k) >= kFirstVelocityRow) {
        specs_.push_back({kVLo, k, false});
        specs_.push_back({kVHi, k, false});
      }
      if (static_cast<std::size_t>(k) >= kFirstPositionRow && std::isfinite(prob_.s_max)) {
        specs_.push_back({kSHi, k, false});
      }
    }
    for (int k = 0; k <= N_; ++k) {
      if (!pins_[static_cast<std::size_t>(k)]) continue;
      specs_.push_back({kPinS, k, true});
      specs_.push_back({kPinV, k, true});
      specs_.push_back({kPinF, k, true});
    }
    if (prob_.terminal_manifold) {
      specs_.push_back({kManV, N_, true});
      specs_.push_back({kManF, N_, true});
    }
    if (std::isfinite(prob_.s_floor)) specs_.push_back({kFloor, N_, false});
    y_ = Eigen::VectorXd::Zero((N_ + 1) * kRowKinds);
  }

  OcpSolution solve(const std::vector<ControlInput>& warm) {
    if (warm.size() != static_cast<std::size_t>(N_)) {
      throw std::invalid_argument("solve_ocp: warm start length must equal N");
    }
    Eigen::VectorXd w(n_);
    for (int k = 0; k < N_; ++k) {
      w[2 * k] = warm[static_cast<std::size_t>(k)].F_t / p_.F_max;
      w[2 * k + 1] = warm[static_cast<std::size_t>(k)].F_b / p_.F_max;
    }
    w = w.cwiseMax(lo_).cwiseMin(hi_);

    Point cur = evaluate(w);
    cost_scale_ = cost_scale(cur);
    cur.merit = merit(cur);

    OcpSolution sol;
    sol.merit_history.push_back(cur.merit);
    std::optional<Point> best;
    auto track_best = [&](const Point& pt) {
      if (pt.viol.max <= opt_.feasibility_tol && (!best || pt.f < best->f)) best = pt;
    };
    track_best(cur);

    double radius = opt_.trust_radius;
    bool converged = false;
    double kkt = kInf;
    for (int iter = 1; iter <= opt_.max_sqp_iterations; ++iter) {
      sol.iterations = iter;
      const Subproblem sub = build(cur, radius);
      if (!opt_.qp_dump_prefix.empty()) {
        dump_qp(sub.qp, opt_.qp_dump_prefix + "_" + std::to_string(iter) + ".txt");
      }
      QpOptions qo;
      qo.tol = opt_.qp_tol;
      const QpSolution qs = solve_qp(sub.qp, qo);
      if (qs.status == QpStatus::infeasible || !qs.z.allFinite()) break;
      store_multipliers(sub, qs);

      const Eigen::VectorXd dw = qs.z.head(n_);
      kkt = kkt_measure(sub, qs, cur);
      const double step = dw.size() ? dw.cwiseAbs().maxCoeff() : 0.0;
      const bool feasible = cur.viol.max <= opt_.feasibility_tol;
      if ((feasible && kkt <= opt_.kkt_tol) || step <= opt_.step_tol) {
        converged = true;
        break;
      }

      const double pred = model_decrease(sub, dw);
      if (!(pred > 0.0)) {
        converged = true;
        break;
      }
      Point trial = evaluate((cur.w + dw).cwiseMax(lo_).cwiseMin(hi_));
      trial.merit = merit(trial);
      const double first_actual = cur.merit - trial.merit;
      if (first_actual < 0.75 * pred && trial.viol.l1 > 0.0) {
        if (auto soc = second_order_correction(sub, dw, trial, qo)) {
          if (soc->merit < trial.merit) trial = std::move(*soc);
        }
      }
      const double actual = cur.merit - trial.merit;
      if (actual >= opt_.accept_ratio * pred) {
        if (actual >= 0.75 * pred && step >= 0.99 * radius) {
          radius = std::min(2.0 * radius, opt_.max_trust_radius);
        }
        cur = std::move(trial);
        sol.merit_history.push_back(cur.merit);
        track_best(cur);
      } else {
        radius *= 0.5;
        if (radius <= opt_.step_tol) {
          converged = true;
          break;
        }
      }
    }

    restore(cur);
    track_best(cur);

    const bool feasible = cur.viol.max <= opt_.feasibility_tol;
    const Point* out = &cur;
    if (converged && feasible) {
      sol.status = SolverStatus::optimal;
    } else if (feasible) {
      sol.status = SolverStatus::max_iterations;
    } else if (best) {
      sol.status = SolverStatus::max_iterations;
      out = &*best;
    } else {
      sol.status = SolverStatus::infeasible;
    }
    sol.x = out->x;
    sol.u = out->u;
    sol.objective = out->f;
    sol.max_violation = out->viol.max;
    sol.kkt_residual = kkt;
    return sol;
  }

 private:
  enum RowKind { kFHi, kFLo, kVLo, kVHi, kSHi, kPinS, kPinV, kPinF, kManV, kManF, kFloor, kRowKinds };

  struct RowSpec {
    RowKind kind;
    int step;
    bool equality;
  };

  // Scaled constraint value c (c <= 0, or c = 0), its state gradient and its
  // second derivative in s.
  struct RowEval {
    double c{0.0};
    Eigen::RowVector3d dc = Eigen::RowVector3d::Zero();
    double d2c_ss{0.0};
  };

  // Linearized row c0 + J dw <= 0 or = 0.
  struct Row {
    Eigen::RowVectorXd J;
    double c0{0.0};
    bool equality{false};
    bool elastic{false};
    Eigen::Index key{0};
    std::size_t spec{0};
  };

  struct Point {
    Eigen::VectorXd w;
    std::vector<ControlInput> u;
    std::vector<VehicleState> x;
    double f{0.0};
    ViolationSummary viol;
    double merit{0.0};
  };

  struct Subproblem {
    QpProblem qp;
    Eigen::VectorXd grad;  // objective gradient in dw, scaled
    Eigen::MatrixXd hess;  // model Hessian in dw, scaled
    std::vector<Row> rows;
    Eigen::VectorXd lb_box;
    Eigen::VectorXd ub_box;
  };

  RowEval eval_row(const RowSpec& spec, const VehicleState& x) const {
    const double Fs = p_.F_max;
    const double vs = p_.v_max;
    const double ss = prob_.position_scale;
    RowEval e;
    switch (spec.kind) {
      case kFHi: e.c = (x.F - p_.F_max) / Fs; e.dc[2] = 1.0 / Fs; break;
      case kFLo: e.c = (p_.F_min - x.F) / Fs; e.dc[2] = -1.0 / Fs; break;
      case kVLo: e.c = -x.v / vs; e.dc[1] = -1.0 / vs; break;
      case kVHi: e.c = (x.v - vs) / vs; e.dc[1] = 1.0 / vs; break;
      case kSHi: e.c = (x.s - prob_.s_max) / ss; e.dc[0] = 1.0 / ss; break;
      case kPinS:
      case kPinV:
      case kPinF: {
        const VehicleState& t = *pins_[static_cast<std::size_t>(spec.step)];
        if (spec.kind == kPinS) { e.c = (x.s - t.s) / ss; e.dc[0] = 1.0 / ss; }
        if (spec.kind == kPinV) { e.c = (x.v - t.v) / vs; e.dc[1] = 1.0 / vs; }
        if (spec.kind == kPinF) { e.c = (x.F - t.F) / Fs; e.dc[2] = 1.0 / Fs; }
        break;
      }
      case kManV:
      case kManF: {
        const int r = spec.kind == kManV ? 0 : 1;
        const double scale = r == 0 ? vs : Fs;
        const auto& L = prob_.terminal_manifold->row(r);
        e.c = ((r == 0 ? x.v : x.F) - eval_quadratic(L, x.s)) / scale;
        e.dc[0] = -eval_quadratic_slope(L, x.s) / scale;
        e.dc[r + 1] = 1.0 / scale;
        e.d2c_ss = -2.0 * L[2] / scale;
        break;
      }
      case kFloor: e.c = (prob_.s_floor - x.s) / ss; e.dc[0] = -1.0 / ss; break;
      case kRowKinds: break;
    }
    return e;
  }

  Eigen::Index key(const RowSpec& spec) const { return spec.step * kRowKinds + spec.kind; }

  Point evaluate(const Eigen::VectorXd& w) const {
    Point pt;
    pt.w = w;
    pt.u.resize(static_cast<std::size_t>(N_));
    for (int k = 0; k < N_; ++k) {
      pt.u[static_cast<std::size_t>(k)] = {w[2 * k] * p_.F_max, w[2 * k + 1] * p_.F_max};
    }
    pt.x = ocp_rollout(prob_, pt.u);
    pt.f = ocp_objective(prob_, pt.x, pt.u);
    pt.viol = ocp_violation(prob_, pt.x);
    return pt;
  }

  double merit(const Point& pt) const { return cost_scale_ * pt.f + opt_.penalty * pt.viol.l1; }

  // Normalizes the objective by a magnitude proportional to the cost
  // coefficients, so the iterates do not depend on their overall scale.
  double cost_scale(const Point& start) const {
    const auto& q = prob_.quadratic;
    const double dv = std::max(q.v_ref, p_.v_max - q.v_ref);
    const double h_max = prob_.fuel_weight * detail::fuel_poly(p_.v_max, p_.F_max, prob_.fuel) +
                         0.5 * (q.q_v * dv * dv + q.r_t * p_.F_max * p_.F_max +
                                q.r_b * p_.F_min * p_.F_min);
    const double mag = N_ * h_max + std::abs(eval_cubic(prob_.terminal_cost, start.x.back().s)) +
                       std::abs(eval_cubic_slope(prob_.terminal_cost, start.x.back().s)) *
                           prob_.position_scale;
    return mag > 0.0 ? 1.0 / mag : 1.0;
  }

  // Curvature of the velocity update in (s, v) at x.
  Eigen::Matrix2d velocity_curvature(const VehicleState& x) const {
    const GradeSample g = prob_.grade_at(x.s);
    const double k = p_.t_s / p_.m;
    const double mg = p_.m * p_.g;
    const double c = std::cos(g.theta);
    const double s = std::sin(g.theta);
    Eigen::Matrix2d out = Eigen::Matrix2d::Zero();
    out(0, 0) = k * mg * ((p_.c_r * c + s) * g.slope * g.slope + (p_.c_r * s - c) * g.curvature);
    out(1, 1) = -2.0 * k * p_.drag_coefficient();
    return out;
  }

  static Eigen::MatrixXd psd_part(const Eigen::MatrixXd& M) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (M + M.transpose()));
    const Eigen::VectorXd lambda = eig.eigenvalues().cwiseMax(0.0);
    return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
  }

  Subproblem build(const Point& cur, double radius) const {
    const double Fs = p_.F_max;

    // Sensitivities d x_k / d w, 3 x n, nonzero in columns [0, 2k).
    std::vector<Eigen::MatrixXd> S(static_cast<std::size_t>(N_) + 1, Eigen::MatrixXd::Zero(3, n_));
    std::vector<Eigen::Matrix3d> A(static_cast<std::size_t>(N_), Eigen::Matrix3d::Identity());
    for (int k = 0; k < N_; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      if (hold_[ku]) {
        S[ku + 1] = S[ku];
        continue;
      }
      const LinearizedStep lin = linearize_dynamics(cur.x[ku], prob_.grade_at(cur.x[ku].s), p_);
      A[ku] = lin.A;
      const Eigen::Index c = 2 * k;
      S[ku + 1].leftCols(c) = lin.A * S[ku].leftCols(c);
      S[ku + 1].middleCols(c, 2) = lin.B * Fs;
    }

    Subproblem sub;
    sub.grad = Eigen::VectorXd::Zero(n_);
    sub.hess = Eigen::MatrixXd::Zero(n_, n_);
    const auto& q = prob_.quadratic;
    std::vector<Eigen::Vector3d> state_grad(static_cast<std::size_t>(N_) + 1, Eigen::Vector3d::Zero());
    for (int k = 0; k < N_; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const CostExpansion ce = quadraticize_cost(cur.x[ku], cur.u[ku], prob_.fuel);
      const Eigen::Vector3d gk(prob_.fuel_weight * ce.g[1] + q.q_v * (cur.x[ku].v - q.v_ref),
                               prob_.fuel_weight * ce.g[3] + q.r_t * cur.u[ku].F_t,
                               q.r_b * cur.u[ku].F_b);
      const double v = cur.x[ku].v;
      const auto& fp = prob_.fuel;
      Eigen::Matrix3d Hk = Eigen::Matrix3d::Zero();
      Hk(0, 0) = prob_.fuel_weight * (2.0 * fp.b1 + 6.0 * fp.b2 * v + 2.0 * fp.c2 * cur.u[ku].F_t) + q.q_v;
      Hk(1, 1) = q.r_t;
      Hk(2, 2) = q.r_b;
      const Eigen::Index cols = 2 * k + 2;
      Eigen::MatrixXd Jk = Eigen::MatrixXd::Zero(3, cols);
      Jk.row(0) = S[ku].row(1).head(cols);
      Jk(1, 2 * k) = Fs;
      Jk(2, 2 * k + 1) = Fs;
      sub.grad.head(cols).noalias() += cost_scale_ * (Jk.transpose() * gk);
      sub.hess.topLeftCorner(cols, cols).noalias() += cost_scale_ * (Jk.transpose() * Hk * Jk);
      state_grad[ku][1] += cost_scale_ * gk[0];
    }
    const double sN = cur.x.back().s;
    const double slope_N = cost_scale_ * eval_cubic_slope(prob_.terminal_cost, sN);
    sub.grad += slope_N * S.back().row(0).transpose();
    state_grad.back()[0] += slope_N;
    double curv_N = cost_scale_ * (2.0 * prob_.terminal_cost[2] + 6.0 * prob_.terminal_cost[3] * sN);

    // Rows, and the multiplier-weighted row gradients for the adjoint.
    for (std::size_t i = 0; i < specs_.size(); ++i) {
      const RowSpec& spec = specs_[i];
      const auto ku = static_cast<std::size_t>(spec.step);
      const RowEval e = eval_row(spec, cur.x[ku]);
      const double y = y_[key(spec)];
      if (y != 0.0) {
        state_grad[ku] += y * e.dc.transpose();
        if (spec.step == N_) curv_N += y * e.d2c_ss;
      }
      if (spec.step == 0) continue;  // fixed by x0, nothing to linearize
      Eigen::RowVectorXd J = e.dc * S[ku];
      if (!spec.equality && e.c + J.cwiseAbs().sum() * radius < -1e-12) continue;
      sub.rows.push_back({std::move(J), e.c, spec.equality, spec.equality || e.c > 0.0, key(spec), i});
    }

    // Adjoint sweep and per-step dynamics curvature.
    Eigen::Vector3d lam = state_grad.back();
    sub.hess.noalias() += curv_N * S.back().row(0).transpose() * S.back().row(0);
    for (int k = N_ - 1; k >= 1; --k) {
      const auto ku = static_cast<std::size_t>(k);
      if (!hold_[ku] && lam[1] != 0.0) {
        const Eigen::Matrix2d W = lam[1] * velocity_curvature(cur.x[ku]);
        const Eigen::Index cols = 2 * k;
        const Eigen::MatrixXd T = S[ku].topRows(2).leftCols(cols);
        sub.hess.topLeftCorner(cols, cols).noalias() += T.transpose() * W * T;
      }
      lam = state_grad[ku] + A[ku].transpose() * lam;
    }

    sub.hess = psd_part(sub.hess);

    sub.lb_box = lo_ - cur.w;
    sub.ub_box = hi_ - cur.w;

    // QP over z = (dw, slack): one slack per elastic row, equalities as two
    // inequalities sharing it. Rows satisfied at the incumbent stay hard, which
    // keeps dw = 0 feasible.
    Eigen::Index m_slack = 0;
    Eigen::Index m_in = 0;
    for (const auto& row : sub.rows) {
      m_slack += row.elastic ? 1 : 0;
      m_in += row.equality ? 2 : 1;
    }
    const Eigen::Index nz = n_ + m_slack;
    QpProblem& qp = sub.qp;
    qp.H = Eigen::MatrixXd::Zero(nz, nz);
    qp.H.topLeftCorner(n_, n_) = sub.hess;
    // Relative to the model's own magnitude, so flat directions still reach
    // the trust-region boundary.
    const double mag = std::max({sub.grad.size() ? sub.grad.cwiseAbs().maxCoeff() : 0.0,
                                 sub.hess.size() ? sub.hess.diagonal().maxCoeff() : 0.0, 1e-12});
    qp.H.diagonal().head(n_).array() += opt_.regularization * mag;
    qp.H.diagonal().tail(m_slack).array() += opt_.regularization * mag;
    qp.g = Eigen::VectorXd::Zero(nz);
    qp.g.head(n_) = sub.grad;
    qp.g.tail(m_slack).setConstant(opt_.penalty);
    qp.A_eq.resize(0, nz);
    qp.b_eq.resize(0);
    qp.A_in = Eigen::MatrixXd::Zero(m_in, nz);
    qp.b_in.resize(m_in);
    Eigen::Index r = 0;
    Eigen::Index slack = n_;
    for (const auto& row : sub.rows) {
      qp.A_in.row(r).head(n_) = row.J;
      if (row.elastic) qp.A_in(r, slack) = -1.0;
      qp.b_in[r++] = -row.c0;
      if (row.equality) {
        qp.A_in.row(r).head(n_) = -row.J;
        qp.A_in(r, slack) = -1.0;
        qp.b_in[r++] = row.c0;
      }
      if (row.elastic) ++slack;
    }
    qp.lb.resize(nz);
    qp.ub.resize(nz);
    qp.lb.head(n_) = sub.lb_box.cwiseMax(-radius);
    qp.ub.head(n_) = sub.ub_box.cwiseMin(radius);
    qp.lb.tail(m_slack).setZero();
    qp.ub.tail(m_slack).setConstant(kInf);
    return sub;
  }

  // Re-solves the QP with each row constant shifted by the curvature error
  // seen at the trial point, to counter the Maratos effect.
  std::optional<Point> second_order_correction(const Subproblem& sub, const Eigen::VectorXd& dw,
                                               const Point& trial, const QpOptions& qo) const {
    QpProblem qp = sub.qp;
    Eigen::Index r = 0;
    for (const auto& row : sub.rows) {
      const RowSpec& spec = specs_[row.spec];
      const double c = eval_row(spec, trial.x[static_cast<std::size_t>(spec.step)]).c - row.J.dot(dw);
      qp.b_in[r++] = -c;
      if (row.equality) qp.b_in[r++] = c;
    }
    const QpSolution qs = solve_qp(qp, qo);
    if (qs.status == QpStatus::infeasible || !qs.z.allFinite()) return std::nullopt;
    Point pt = evaluate((trial.w - dw + qs.z.head(n_)).cwiseMax(lo_).cwiseMin(hi_));
    pt.merit = merit(pt);
    return pt;
  }

  // Removes a small leftover violation by minimum-norm projections onto the
  // linearized constraints.
  void restore(Point& cur) const {
    QpOptions qo;
    qo.tol = opt_.qp_tol;
    for (int r = 0; r < 5; ++r) {
      if (cur.viol.max <= opt_.feasibility_tol || cur.viol.max > kRestoreLimit) return;
      Subproblem sub = build(cur, opt_.max_trust_radius);
      sub.qp.H.topLeftCorner(n_, n_).setIdentity();
      sub.qp.g.head(n_).setZero();
      const QpSolution qs = solve_qp(sub.qp, qo);
      if (qs.status == QpStatus::infeasible || !qs.z.allFinite()) return;
      Point trial = evaluate((cur.w + qs.z.head(n_)).cwiseMax(lo_).cwiseMin(hi_));
      if (!(trial.viol.l1 < cur.viol.l1)) return;
      trial.merit = merit(trial);
      cur = std::move(trial);
    }
  }

  static constexpr double kRestoreLimit = 1e-3;

  void store_multipliers(const Subproblem& sub, const QpSolution& qs) {
    y_.setZero();
    Eigen::Index r = 0;
    for (const auto& row : sub.rows) {
      double y = qs.y_in[r++];
      if (row.equality) y -= qs.y_in[r++];
      y_[row.key] += y;
    }
  }

  double linearized_violation(const Subproblem& sub, const Eigen::VectorXd& dw) const {
    double v = 0.0;
    for (const auto& row : sub.rows) {
      if (!row.elastic) continue;
      const double c = row.c0 + row.J.dot(dw);
      v += row.equality ? std::abs(c) : std::max(c, 0.0);
    }
    return v;
  }

  double model_decrease(const Subproblem& sub, const Eigen::VectorXd& dw) const {
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n_);
    const double m0 = opt_.penalty * linearized_violation(sub, zero);
    const double m1 = sub.grad.dot(dw) + 0.5 * dw.dot(sub.hess * dw) +
                      opt_.penalty * linearized_violation(sub, dw);
    return m0 - m1;
  }

  // Stationarity and complementarity of the current incumbent, using the QP
  // multipliers of the state rows and of the input box where the box, not the
  // trust region, is the binding bound.
  double kkt_measure(const Subproblem& sub, const QpSolution& qs, const Point& cur) const {
    Eigen::VectorXd grad = sub.grad;
    double comp = 0.0;
    Eigen::Index r = 0;
    for (const auto& row : sub.rows) {
      const int reps = row.equality ? 2 : 1;
      for (int j = 0; j < reps; ++j, ++r) {
        const double y = qs.y_in[r];
        grad += (j == 0 ? y : -y) * row.J.transpose();
        if (!row.equality) comp = std::max(comp, std::abs(y * std::min(row.c0, 0.0)));
      }
    }
    for (Eigen::Index i = 0; i < n_; ++i) {
      if (qs.y_lb[i] > 0.0 && sub.qp.lb[i] == sub.lb_box[i]) {
        grad[i] -= qs.y_lb[i];
        comp = std::max(comp, qs.y_lb[i] * (cur.w[i] - lo_[i]));
      }
      if (qs.y_ub[i] > 0.0 && sub.qp.ub[i] == sub.ub_box[i]) {
        grad[i] += qs.y_ub[i];
        comp = std::max(comp, qs.y_ub[i] * (hi_[i] - cur.w[i]));
      }
    }
    const double stat = n_ ? grad.cwiseAbs().maxCoeff() : 0.0;
    return std::max(stat, comp);
  }

  const OcpProblem& prob_;
  OcpOptions opt_;
  const VehicleParams& p_;
  int N_;
  Eigen::Index n_;
  std::vector<bool> hold_;
  std::vector<std::optional<VehicleState>> pins_;
  std::vector<RowSpec> specs_;
  Eigen::VectorXd lo_;
  Eigen::VectorXd hi_;
  Eigen::VectorXd y_;  // multiplier per row key from the latest QP
  double cost_scale_{1.0};
};

}  // namespace detail

inline OcpSolution solve_ocp(const OcpProblem& prob, const std::vector<ControlInput>& warm_start,
                             const OcpOptions& opt = {}) {
  prob.validate();
  return detail::SqpSolver(prob, opt).solve(warm_start);
}

}  // namespace pcc
