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
#include <stdexcept>

#include "pcc_lmpc/common.hpp"
#include "pcc_lmpc/grade_model.hpp"

namespace pcc {

struct VehicleState {
  double s{0.0};  // position along the route (m)
  double v{0.0};  // velocity (m/s)
  double F{0.0};  // realized wheel force (N)

  Eigen::Vector3d vec() const { return {s, v, F}; }
  static VehicleState from(const Eigen::Vector3d& x) { return {x[0], x[1], x[2]}; }
  bool operator==(const VehicleState&) const = default;
};

struct ControlInput {
  double F_t{0.0};  // desired traction force, >= 0
  double F_b{0.0};  // desired braking force, <= 0

  double net() const { return F_t + F_b; }
  bool operator==(const ControlInput&) const = default;
};

struct VehicleParams {
  double m{1500.0};
  double tau{0.5};
  double t_s{0.1};
  double g{9.81};
  double c_r{0.01};
  double rho{1.225};
  double A{2.5};
  double C_d{0.32};
  double v_max{20.0};
  double F_max{4000.0};
  double F_min{-6000.0};

  double filter_gain() const { return t_s / tau; }
  double drag_coefficient() const { return 0.5 * rho * A * C_d; }

  void validate() const {
    for (double x : {m, tau, t_s, g, c_r, rho, A, C_d, v_max, F_max, F_min}) {
      require_finite(x, "vehicle parameter");
    }
    if (m <= 0.0) throw std::invalid_argument("vehicle.m must be positive");
    if (tau <= 0.0) throw std::invalid_argument("vehicle.tau must be positive");
    if (t_s <= 0.0 || t_s > tau) throw std::invalid_argument("vehicle.t_s must lie in (0, tau]");
    if (v_max <= 0.0) throw std::invalid_argument("vehicle.v_max must be positive");
    if (!(F_min < 0.0 && F_max > 0.0)) {
      throw std::invalid_argument("vehicle force bounds must satisfy F_min < 0 < F_max");
    }
  }
};

// Polynomial fuel model coefficients; output is normalized fuel per step.
struct FuelParams {
  double b0{0.005};
  double b1{1e-4};
  double b2{1e-5};
  double c0{2e-4};
  double c1{5e-5};
  double c2{1e-6};

  FuelParams scaled(double alpha) const {
    return {alpha * b0, alpha * b1, alpha * b2, alpha * c0, alpha * c1, alpha * c2};
  }

  void validate() const {
    for (double x : {b0, b1, b2, c0, c1, c2}) {
      require_finite(x, "fuel coefficient");
      if (x < 0.0) throw std::invalid_argument("fuel coefficients must be nonnegative");
    }
  }
};

// Projection of an input onto the admissible input box.
inline ControlInput saturate(const ControlInput& u, const VehicleParams& p) {
  return {std::clamp(u.F_t, 0.0, p.F_max), std::clamp(u.F_b, p.F_min, 0.0)};
}

inline bool is_admissible(const ControlInput& u, const VehicleParams& p) {
  return u.F_t >= 0.0 && u.F_t <= p.F_max && u.F_b <= 0.0 && u.F_b >= p.F_min;
}

namespace detail {

inline double resistance(double v, double theta, const VehicleParams& p) {
  return -(p.m * p.g * p.c_r * std::cos(theta) + p.m * p.g * std::sin(theta) +
           p.drag_coefficient() * v * v);
}

inline double fuel_poly(double v, double F_t, const FuelParams& fp) {
  return v * (fp.b0 + v * (fp.b1 + v * fp.b2)) + F_t * (fp.c0 + v * (fp.c1 + v * fp.c2));
}

}  // namespace detail

// Resistive force entering the velocity update. Negative on a flat road, so
// drag, rolling resistance and uphill grade all decelerate the vehicle.
inline double resistance_force(double v, double theta, const VehicleParams& p) {
  require_finite(v, "velocity");
  require_finite(theta, "grade");
  return detail::resistance(v, theta, p);
}

// One step of the longitudinal model without the standstill clamp. This is the
// prediction model the controller optimizes over.
inline VehicleState model_step(const VehicleState& x, const ControlInput& u, double theta,
                               const VehicleParams& p) {
  const double a = p.filter_gain();
  return {x.s + p.t_s * x.v, x.v + (p.t_s / p.m) * (x.F + detail::resistance(x.v, theta, p)),
          (1.0 - a) * x.F + a * u.net()};
}

inline VehicleState model_step(const VehicleState& x, const ControlInput& u,
                               const GradeCoeffs& grade, const VehicleParams& p) {
  return model_step(x, u, eval_grade(grade, x.s), p);
}

// Plant step: the model step with velocity held at zero when the vehicle would
// otherwise roll backwards. The state may leave the admissible set otherwise.
inline VehicleState step_dynamics(const VehicleState& x, const ControlInput& u, double theta,
                                  const VehicleParams& p) {
  require_finite(x.s, "position");
  require_finite(x.v, "velocity");
  require_finite(x.F, "force");
  require_finite(u.F_t, "traction force");
  require_finite(u.F_b, "braking force");
  require_finite(theta, "grade");
  VehicleState next = model_step(x, u, theta, p);
  next.v = std::max(next.v, 0.0);
  return next;
}

inline double fuel_rate(double v, double F_t, const FuelParams& fp) {
  if (!(v >= 0.0)) throw std::invalid_argument("fuel_rate: velocity must be nonnegative");
  if (!(F_t >= 0.0)) throw std::invalid_argument("fuel_rate: traction must be nonnegative");
  return detail::fuel_poly(v, F_t, fp);
}

struct LinearizedStep {
  Eigen::Matrix3d A;
  Eigen::Matrix<double, 3, 2> B;
  Eigen::Vector3d c;
};

// Jacobians of model_step at xbar. The grade enters through theta(s), so the
// position column carries d theta / d s. The model is affine in the input, so
// the residual c makes f(xbar, u) = A xbar + B u + c hold for every u.
inline LinearizedStep linearize_dynamics(const VehicleState& xbar, const GradeSample& grade,
                                         const VehicleParams& p) {
  const double a = p.filter_gain();
  const double k = p.t_s / p.m;
  const double dFR_dtheta =
      p.m * p.g * (p.c_r * std::sin(grade.theta) - std::cos(grade.theta));
  const double dFR_dv = -2.0 * p.drag_coefficient() * xbar.v;

  LinearizedStep lin;
  lin.A << 1.0, p.t_s, 0.0,                                  //
      k * dFR_dtheta * grade.slope, 1.0 + k * dFR_dv, k,  //
      0.0, 0.0, 1.0 - a;
  lin.B << 0.0, 0.0,  //
      0.0, 0.0,       //
      a, a;
  const VehicleState f0 = model_step(xbar, ControlInput{}, grade.theta, p);
  lin.c = f0.vec() - lin.A * xbar.vec();
  return lin;
}

inline LinearizedStep linearize_dynamics(const VehicleState& xbar, const GradeCoeffs& grade,
                                         const VehicleParams& p) {
  return linearize_dynamics(xbar, sample_grade(grade, xbar.s), p);
}

// Second-order model of the stage cost over z = (s, v, F, F_t, F_b) around a
// reference point: h(zbar + dz) ~ r + g^T dz + 0.5 dz^T H dz.
struct CostExpansion {
  Eigen::Matrix<double, 5, 5> H;
  Eigen::Matrix<double, 5, 1> g;
  double r{0.0};
};

inline CostExpansion quadraticize_cost(const VehicleState& xbar, const ControlInput& ubar,
                                       const FuelParams& fp) {
  const double v = xbar.v;
  const double Ft = ubar.F_t;
  CostExpansion out;
  out.r = detail::fuel_poly(v, Ft, fp);
  out.g.setZero();
  out.g[1] = fp.b0 + 2.0 * fp.b1 * v + 3.0 * fp.b2 * v * v + Ft * (fp.c1 + 2.0 * fp.c2 * v);
  out.g[3] = fp.c0 + fp.c1 * v + fp.c2 * v * v;

  // Only the (v, F_t) block is nonzero; clamp its eigenvalues at zero.
  Eigen::Matrix2d block;
  block << 2.0 * fp.b1 + 6.0 * fp.b2 * v + 2.0 * fp.c2 * Ft, fp.c1 + 2.0 * fp.c2 * v,
      fp.c1 + 2.0 * fp.c2 * v, 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig;
  eig.computeDirect(block);
  const Eigen::Vector2d lambda = eig.eigenvalues().cwiseMax(0.0);
  const Eigen::Matrix2d psd = eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();

  out.H.setZero();
  out.H(1, 1) = psd(0, 0);
  out.H(1, 3) = psd(0, 1);
  out.H(3, 1) = psd(1, 0);
  out.H(3, 3) = psd(1, 1);
  return out;
}

}  // namespace pcc
