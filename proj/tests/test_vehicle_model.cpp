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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "pcc_lmpc/vehicle_model.hpp"

namespace pcc {
namespace {

TEST(Dynamics, CoastingOnFlatRoadDecelerates) {
  VehicleParams p;
  const VehicleState x{10.0, 15.0, 0.0};
  const VehicleState y = step_dynamics(x, {}, 0.0, p);
  // rolling 1500*9.81*0.01 = 147.15 N, drag 0.49*225 = 110.25 N
  EXPECT_NEAR(y.s, 11.5, 1e-12);
  EXPECT_NEAR(y.v, 15.0 - 0.1 / 1500.0 * (147.15 + 110.25), 1e-12);
  EXPECT_DOUBLE_EQ(y.F, 0.0);
}

TEST(Dynamics, ForceFilterIsFirstOrderLag) {
  VehicleParams p;
  VehicleState x{0.0, 5.0, 0.0};
  const ControlInput u{2000.0, 0.0};
  for (int k = 1; k <= 30; ++k) {
    x = step_dynamics(x, u, 0.0, p);
    EXPECT_NEAR(x.F, 2000.0 * (1.0 - std::pow(1.0 - p.t_s / p.tau, k)), 1e-9);
  }
}

TEST(Dynamics, BrakeAndTractionAddIntoNetForce) {
  VehicleParams p;
  const VehicleState x{0.0, 5.0, 100.0};
  const VehicleState a = step_dynamics(x, {1000.0, -400.0}, 0.0, p);
  const VehicleState b = step_dynamics(x, {600.0, 0.0}, 0.0, p);
  EXPECT_DOUBLE_EQ(a.F, b.F);
  EXPECT_DOUBLE_EQ(a.v, b.v);
}

TEST(Dynamics, StandstillDoesNotRollBackwards) {
  VehicleParams p;
  const VehicleState y = step_dynamics({3.0, 0.0, -500.0}, {0.0, -6000.0}, 0.05, p);
  EXPECT_EQ(y.v, 0.0);
  EXPECT_EQ(y.s, 3.0);
  // the prediction model has no clamp
  EXPECT_LT(model_step({3.0, 0.0, -500.0}, {0.0, -6000.0}, 0.05, p).v, 0.0);
}

TEST(Dynamics, UphillSlowsDownhillSpeedsUp) {
  VehicleParams p;
  const VehicleState x{0.0, 10.0, 300.0};
  const double flat = step_dynamics(x, {}, 0.0, p).v;
  EXPECT_LT(step_dynamics(x, {}, 0.04, p).v, flat);
  EXPECT_GT(step_dynamics(x, {}, -0.04, p).v, flat);
}

TEST(Dynamics, RejectsNonFiniteInput) {
  VehicleParams p;
  EXPECT_THROW(step_dynamics({0.0, NAN, 0.0}, {}, 0.0, p), std::invalid_argument);
  EXPECT_THROW(step_dynamics({}, {INFINITY, 0.0}, 0.0, p), std::invalid_argument);
  EXPECT_THROW(step_dynamics({}, {}, NAN, p), std::invalid_argument);
}

TEST(Params, ValidateRejectsBadValues) {
  VehicleParams p;
  EXPECT_NO_THROW(p.validate());
  p.t_s = 1.0;  // above tau
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.F_min = 10.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.m = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  FuelParams f;
  f.c1 = -1e-6;
  EXPECT_THROW(f.validate(), std::invalid_argument);
}

TEST(Saturate, ProjectsOntoInputBox) {
  VehicleParams p;
  const ControlInput u = saturate({9000.0, 50.0}, p);
  EXPECT_EQ(u.F_t, p.F_max);
  EXPECT_EQ(u.F_b, 0.0);
  EXPECT_EQ(saturate({-5.0, -1e5}, p), (ControlInput{0.0, p.F_min}));
  EXPECT_TRUE(is_admissible(saturate({123.0, -45.0}, p), p));
  EXPECT_FALSE(is_admissible({-1.0, 0.0}, p));
}

TEST(Fuel, PolynomialByHand) {
  FuelParams f;
  // v = 10: 0.05 + 0.01 + 0.01 = 0.07; F_t = 1000: 1000 * (2e-4 + 5e-4 + 1e-4) = 0.8
  EXPECT_NEAR(fuel_rate(10.0, 0.0, f), 0.07, 1e-15);
  EXPECT_NEAR(fuel_rate(10.0, 1000.0, f), 0.87, 1e-13);
  EXPECT_EQ(fuel_rate(0.0, 0.0, f), 0.0);
  EXPECT_THROW(fuel_rate(-0.1, 0.0, f), std::invalid_argument);
  EXPECT_THROW(fuel_rate(1.0, -1.0, f), std::invalid_argument);
}

TEST(Fuel, ScaledIsLinear) {
  const FuelParams f = FuelParams{}.scaled(3.0);
  EXPECT_NEAR(fuel_rate(7.0, 500.0, f), 3.0 * fuel_rate(7.0, 500.0, FuelParams{}), 1e-14);
}

Eigen::Vector3d step_vec(const Eigen::Vector3d& x, const Eigen::Vector2d& u, const GradeCoeffs& g,
                         const VehicleParams& p) {
  return model_step(VehicleState::from(x), {u[0], u[1]}, g, p).vec();
}

TEST(Linearization, MatchesCentralDifferences) {
  VehicleParams p;
  const GradeCoeffs g{0.01, 2e-4, -3e-7, 0.0, 1000.0};
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> s(0.0, 300.0), v(0.5, 19.0), F(-5000.0, 3500.0),
      ft(0.0, 4000.0), fb(-6000.0, 0.0);
  for (int trial = 0; trial < 40; ++trial) {
    const VehicleState x{s(rng), v(rng), F(rng)};
    const Eigen::Vector2d u(ft(rng), fb(rng));
    const LinearizedStep lin = linearize_dynamics(x, g, p);
    for (int i = 0; i < 3; ++i) {
      const double h = 1e-5 * std::max(1.0, std::abs(x.vec()[i]));
      Eigen::Vector3d e = Eigen::Vector3d::Zero();
      e[i] = h;
      const Eigen::Vector3d col =
          (step_vec(x.vec() + e, u, g, p) - step_vec(x.vec() - e, u, g, p)) / (2.0 * h);
      EXPECT_LE((col - lin.A.col(i)).norm(), 1e-6 * std::max(1.0, col.norm())) << "col " << i;
    }
    for (int i = 0; i < 2; ++i) {
      Eigen::Vector2d e = Eigen::Vector2d::Zero();
      e[i] = 1.0;
      const Eigen::Vector3d col = (step_vec(x.vec(), u + e, g, p) - step_vec(x.vec(), u - e, g, p)) / 2.0;
      EXPECT_LE((col - lin.B.col(i)).norm(), 1e-9);
    }
    // affine in u: exact at any input
    const Eigen::Vector3d pred = lin.A * x.vec() + lin.B * u + lin.c;
    EXPECT_LE((pred - step_vec(x.vec(), u, g, p)).norm(), 1e-9 * (1.0 + pred.norm()));
  }
}

TEST(CostExpansion, GradientMatchesFiniteDifferences) {
  FuelParams f;
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> v(0.1, 20.0), ft(0.0, 4000.0);
  for (int trial = 0; trial < 40; ++trial) {
    const double vv = v(rng), tt = ft(rng);
    const CostExpansion c = quadraticize_cost({0.0, vv, 0.0}, {tt, 0.0}, f);
    EXPECT_NEAR(c.r, fuel_rate(vv, tt, f), 1e-14);
    const double hv = 1e-5 * vv, ht = 1e-3;
    const double dv = (fuel_rate(vv + hv, tt, f) - fuel_rate(vv - hv, tt, f)) / (2.0 * hv);
    const double dt = (fuel_rate(vv, tt + ht, f) - fuel_rate(vv, tt - ht, f)) / (2.0 * ht);
    EXPECT_NEAR(c.g[1], dv, 1e-6 * std::abs(dv));
    EXPECT_NEAR(c.g[3], dt, 1e-6 * std::abs(dt));
    EXPECT_EQ(c.g[0], 0.0);
    EXPECT_EQ(c.g[2], 0.0);
    EXPECT_EQ(c.g[4], 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 5, 5>> eig(c.H);
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12);
  }
}

}  // namespace
}  // namespace pcc
