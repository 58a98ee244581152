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

// Brute-force reference for small convex QPs: every subset of inequality
// constraints (rows and finite bounds) is tried as the active set, the
// equality-constrained subproblem is solved by a least-squares KKT solve, and
// the best primal-feasible stationary point is returned.

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <vector>

#include "pcc_lmpc/qp_solver.hpp"

namespace pcc::testing {

struct EnumerationResult {
  double objective{kInf};
  Eigen::VectorXd z;
  bool feasible{false};
};

inline EnumerationResult enumerate_active_sets(const QpProblem& qp, double feas_tol = 1e-9) {
  const Eigen::Index n = qp.size();
  // Every inequality as a row a^T z <= b.
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  for (Eigen::Index i = 0; i < qp.A_in.rows(); ++i) {
    rows.push_back(qp.A_in.row(i).transpose());
    rhs.push_back(qp.b_in[i]);
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    if (std::isfinite(qp.lb[j])) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
      e[j] = -1.0;
      rows.push_back(e);
      rhs.push_back(-qp.lb[j]);
    }
    if (std::isfinite(qp.ub[j])) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
      e[j] = 1.0;
      rows.push_back(e);
      rhs.push_back(qp.ub[j]);
    }
  }
  const std::size_t m = rows.size();
  EnumerationResult best;
  for (std::size_t mask = 0; mask < (std::size_t{1} << m); ++mask) {
    std::vector<std::size_t> act;
    for (std::size_t i = 0; i < m; ++i) {
      if (mask & (std::size_t{1} << i)) act.push_back(i);
    }
    const Eigen::Index k = qp.A_eq.rows() + static_cast<Eigen::Index>(act.size());
    if (k > n) continue;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
    Eigen::VectorXd b(n + k);
    K.topLeftCorner(n, n) = qp.H;
    b.head(n) = -qp.g;
    Eigen::Index r = n;
    for (Eigen::Index i = 0; i < qp.A_eq.rows(); ++i, ++r) {
      K.block(r, 0, 1, n) = qp.A_eq.row(i);
      K.block(0, r, n, 1) = qp.A_eq.row(i).transpose();
      b[r] = qp.b_eq[i];
    }
    for (std::size_t i : act) {
      K.block(r, 0, 1, n) = rows[i].transpose();
      K.block(0, r, n, 1) = rows[i];
      b[r] = rhs[i];
      ++r;
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(K);
    const Eigen::VectorXd sol = cod.solve(b);
    if ((K * sol - b).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + b.cwiseAbs().maxCoeff())) continue;
    const Eigen::VectorXd z = sol.head(n);
    bool ok = true;
    for (Eigen::Index i = 0; i < qp.A_eq.rows() && ok; ++i) {
      ok = std::abs(qp.A_eq.row(i).dot(z) - qp.b_eq[i]) <= feas_tol;
    }
    for (std::size_t i = 0; i < m && ok; ++i) ok = rows[i].dot(z) <= rhs[i] + feas_tol;
    if (!ok) continue;
    const double obj = qp.objective(z);
    if (!best.feasible || obj < best.objective) {
      best.feasible = true;
      best.objective = obj;
      best.z = z;
    }
  }
  return best;
}

}  // namespace pcc::testing
