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

#include <random>
#include <sstream>

#include "pcc_lmpc/qp_solver.hpp"
#include "support/qp_enumeration.hpp"
#include "support/random_qp.hpp"

namespace pcc {
namespace {

TEST(SolveQp, ProjectionOntoHyperplane) {
  QpProblem qp = QpProblem::unconstrained(4);
  qp.H = 2.0 * Eigen::MatrixXd::Identity(4, 4);
  qp.A_eq = Eigen::MatrixXd::Zero(1, 4);
  qp.A_eq(0, 0) = 1.0;
  qp.b_eq = Eigen::VectorXd::Ones(1);
  const QpSolution s = solve_qp(qp);
  ASSERT_EQ(s.status, QpStatus::optimal);
  EXPECT_NEAR(s.z[0], 1.0, 1e-12);
  EXPECT_NEAR(s.z.tail(3).norm(), 0.0, 1e-12);
  EXPECT_NEAR(s.objective, 1.0, 1e-12);
}

TEST(SolveQp, ClippedUnconstrainedMinimum) {
  // min (z - 3)^2 s.t. z <= 2, written as z^2 - 6 z.
  QpProblem qp = QpProblem::unconstrained(1);
  qp.H(0, 0) = 2.0;
  qp.g[0] = -6.0;
  qp.ub[0] = 2.0;
  const QpSolution s = solve_qp(qp);
  ASSERT_EQ(s.status, QpStatus::optimal);
  EXPECT_NEAR(s.z[0], 2.0, 1e-12);
  EXPECT_NEAR(s.y_ub[0], 2.0, 1e-12);
}

TEST(SolveQp, LinearObjectiveOverBox) {
  // Zero Hessian: the proximal path must still land on the vertex.
  QpProblem qp = QpProblem::unconstrained(2);
  qp.g << 1.0, -2.0;
  qp.lb << -1.0, -1.0;
  qp.ub << 1.0, 3.0;
  const QpSolution s = solve_qp(qp);
  ASSERT_EQ(s.status, QpStatus::optimal);
  EXPECT_NEAR(s.z[0], -1.0, 1e-9);
  EXPECT_NEAR(s.z[1], 3.0, 1e-9);
  EXPECT_LE(s.kkt_residual, 1e-8);
}

TEST(SolveQp, DetectsInfeasibleConstraints) {
  QpProblem qp = QpProblem::unconstrained(2);
  qp.H = Eigen::MatrixXd::Identity(2, 2);
  qp.A_in.resize(2, 2);
  qp.b_in.resize(2);
  qp.A_in << 1.0, 1.0, -1.0, -1.0;
  qp.b_in << 1.0, -2.0;  // z1 + z2 <= 1 and z1 + z2 >= 2
  const QpSolution s = solve_qp(qp);
  EXPECT_EQ(s.status, QpStatus::infeasible);
  EXPECT_GT(s.infeasibility, 0.0);
}

TEST(SolveQp, ContradictoryBoundsAreInfeasible) {
  QpProblem qp = QpProblem::unconstrained(1);
  qp.H(0, 0) = 1.0;
  qp.lb[0] = 1.0;
  qp.ub[0] = 0.0;
  EXPECT_EQ(solve_qp(qp).status, QpStatus::infeasible);
}

TEST(SolveQp, SinglePointFeasibleSetWithSingularHessian) {
  // Two equalities and three inequalities meet in one point; rank-1 H.
  QpProblem qp = QpProblem::unconstrained(3);
  qp.H << 0.0033191146135831727, 0.028600475113875003, -0.0011593921979947621,
      0.028600475113875003, 0.24644740298869036, -0.0099903653734249413,
      -0.0011593921979947621, -0.0099903653734249413, 0.00040498458934504694;
  qp.g << -4.9010224855270081, 1.7660558403873741, -0.60723143469893404;
  qp.A_eq.resize(2, 3);
  qp.A_eq << -1.3735396099848114, 0.11550079832538887, -1.0707619229017633,
      0.89073992393188972, -1.3384609632750673, 0.35731304554956556;
  qp.b_eq.resize(2);
  qp.b_eq << 0.4351164453756039, -1.3990131019921292;
  qp.A_in.resize(7, 3);
  qp.A_in << 1.8447231750155448, -0.12118516751165816, 1.0616260350282545,
      -1.5088118691570644, 0.70711100587240494, 1.0021562609966632,
      2.5815324162013651, -0.45772798767384065, -1.8836799021455342,
      1.1989227675033518, -0.22592723548717472, -0.33530172423053295,
      0.70743473271386237, 1.0080313720184979, 2.0761109442396908,
      1.2481602170328281, -1.4324527987321365, 0.19957429569366644,
      -0.015391592044711307, 1.2781625068819833, -0.75337544256624778;
  qp.b_in.resize(7);
  qp.b_in << -0.81630693013525957, 2.9560044624474315, -3.2805500473396103,
      -0.82202177641674579, 1.5618401149583394, -1.8536440556639386, 0.43501363088188882;
  const QpSolution s = solve_qp(qp);
  ASSERT_EQ(s.status, QpStatus::optimal);
  EXPECT_LE(s.kkt_residual, 1e-8);

  Eigen::Matrix3d M;
  M << qp.A_eq, qp.A_in.row(0);
  const Eigen::Vector3d vertex = M.fullPivLu().solve(Eigen::Vector3d(qp.b_eq[0], qp.b_eq[1], qp.b_in[0]));
  EXPECT_LE((s.z - vertex).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(SolveQp, DeterministicOnRepeatedSolve) {
  std::mt19937 rng(7);
  const QpProblem qp = testing::random_qp(rng, {8, 5, 2, 6, true});
  const QpSolution a = solve_qp(qp);
  const QpSolution b = solve_qp(qp);
  ASSERT_EQ(a.z.size(), b.z.size());
  for (Eigen::Index i = 0; i < a.z.size(); ++i) EXPECT_EQ(a.z[i], b.z[i]);
}

TEST(SolveQp, KktOnRandomPsdInstances) {
  std::mt19937 rng(20260101);
  std::uniform_int_distribution<int> dim(2, 20);
  int worst_iter = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    testing::RandomQpSpec spec;
    spec.n = dim(rng);
    spec.rank = std::max(1, spec.n - trial % 4);
    spec.m_eq = trial % 3 == 0 ? 0 : std::min(2, spec.n - 1);
    spec.m_in = 2 + trial % 7;
    spec.bounds = trial % 2 == 0;
    const QpProblem qp = testing::random_qp(rng, spec);
    const QpSolution s = solve_qp(qp);
    ASSERT_EQ(s.status, QpStatus::optimal) << "trial " << trial;
    // Residuals recomputed here from the problem data.
    const KktResiduals r = kkt_residuals(qp, s);
    EXPECT_LE(r.max(), 1e-8) << "trial " << trial;
    worst_iter = std::max(worst_iter, s.iterations);
  }
  EXPECT_GT(worst_iter, 0);
}

TEST(SolveQp, MatchesActiveSetEnumerationOn20Variables) {
  std::mt19937 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const QpProblem qp = testing::random_qp(rng, {20, 12 + trial % 8, 1, 9, false});
    const auto ref = testing::enumerate_active_sets(qp);
    ASSERT_TRUE(ref.feasible);
    const QpSolution s = solve_qp(qp);
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_NEAR(s.objective, ref.objective, 1e-6 * (1.0 + std::abs(ref.objective)))
        << "trial " << trial;
  }
}

TEST(DumpQp, WritesDimensionsAndFullPrecision) {
  QpProblem qp = QpProblem::unconstrained(2);
  qp.H(0, 0) = 1.0 / 3.0;
  std::ostringstream out;
  dump_qp(qp, out);
  const std::string text = out.str();
  EXPECT_EQ(text.rfind("n 2 m_eq 0 m_in 0\n", 0), 0u);
  EXPECT_NE(text.find("0.33333333333333331"), std::string::npos);
}

}  // namespace
}  // namespace pcc
