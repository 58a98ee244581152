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
#include <fstream>
#include <iomanip>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcc_lmpc/common.hpp"

namespace pcc {

// Convex QP
//   minimize    0.5 z^T H z + g^T z
//   subject to  A_eq z  = b_eq
//               A_in z <= b_in
//               lb <= z <= ub        (entries may be +-inf)
// H must be symmetric positive semidefinite.
struct QpProblem {
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd A_eq;
  Eigen::VectorXd b_eq;
  Eigen::MatrixXd A_in;
  Eigen::VectorXd b_in;
  Eigen::VectorXd lb;
  Eigen::VectorXd ub;

  // Unconstrained problem of dimension n with empty constraint blocks.
  static QpProblem unconstrained(Eigen::Index n) {
    QpProblem qp;
    qp.H = Eigen::MatrixXd::Zero(n, n);
    qp.g = Eigen::VectorXd::Zero(n);
    qp.A_eq.resize(0, n);
    qp.b_eq.resize(0);
    qp.A_in.resize(0, n);
    qp.b_in.resize(0);
    qp.lb = Eigen::VectorXd::Constant(n, -kInf);
    qp.ub = Eigen::VectorXd::Constant(n, kInf);
    return qp;
  }

  Eigen::Index size() const { return g.size(); }

  double objective(const Eigen::VectorXd& z) const { return 0.5 * z.dot(H * z) + g.dot(z); }

  void validate() const {
    const Eigen::Index n = g.size();
    if (H.rows() != n || H.cols() != n) throw std::invalid_argument("QP: H must be n x n");
    if (A_eq.cols() != n || A_eq.rows() != b_eq.size()) throw std::invalid_argument("QP: bad A_eq");
    if (A_in.cols() != n || A_in.rows() != b_in.size()) throw std::invalid_argument("QP: bad A_in");
    if (lb.size() != n || ub.size() != n) throw std::invalid_argument("QP: bad bounds");
  }
};

enum class QpStatus { optimal, infeasible, max_iterations };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::infeasible: return "infeasible";
    case QpStatus::max_iterations: return "max_iterations";
  }
  return "?";
}

// Multiplier signs follow the Lagrangian
//   L = f + y_eq^T (A_eq z - b_eq) + y_in^T (A_in z - b_in) + y_lb^T (lb - z) + y_ub^T (z - ub)
// so y_in, y_lb, y_ub are nonnegative at a KKT point.
struct QpSolution {
  QpStatus status{QpStatus::max_iterations};
  Eigen::VectorXd z;
  Eigen::VectorXd y_eq;
  Eigen::VectorXd y_in;
  Eigen::VectorXd y_lb;
  Eigen::VectorXd y_ub;
  double objective{kInf};
  double kkt_residual{kInf};
  double infeasibility{0.0};  // violation of the blocking constraint when infeasible
  int iterations{0};
  int prox_iterations{0};
};

struct QpOptions {
  double tol{1e-8};
  int max_iterations{0};      // 0 selects 20 (n + m)
  double prox_weight{1e-6};   // relative proximal term used when H is singular
  int max_prox_iterations{400};
};

struct KktResiduals {
  double stationarity{0.0};
  double primal{0.0};
  double dual{0.0};
  double complementarity{0.0};
  double max() const { return std::max({stationarity, primal, dual, complementarity}); }
};

// KKT residuals of (z, y) for qp, computed directly from the problem data.
inline KktResiduals kkt_residuals(const QpProblem& qp, const QpSolution& s) {
  KktResiduals r;
  Eigen::VectorXd grad = qp.H * s.z + qp.g;
  if (qp.A_eq.rows() > 0) grad += qp.A_eq.transpose() * s.y_eq;
  if (qp.A_in.rows() > 0) grad += qp.A_in.transpose() * s.y_in;
  grad += s.y_ub - s.y_lb;
  r.stationarity = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;

  auto upd = [](double& acc, double v) { acc = std::max(acc, v); };
  for (Eigen::Index i = 0; i < qp.A_eq.rows(); ++i) {
    upd(r.primal, std::abs(qp.A_eq.row(i).dot(s.z) - qp.b_eq[i]));
  }
  for (Eigen::Index i = 0; i < qp.A_in.rows(); ++i) {
    const double slack = qp.b_in[i] - qp.A_in.row(i).dot(s.z);
    upd(r.primal, -slack);
    upd(r.dual, -s.y_in[i]);
    upd(r.complementarity, std::abs(s.y_in[i] * slack));
  }
  for (Eigen::Index j = 0; j < qp.size(); ++j) {
    if (std::isfinite(qp.lb[j])) {
      const double slack = s.z[j] - qp.lb[j];
      upd(r.primal, -slack);
      upd(r.complementarity, std::abs(s.y_lb[j] * slack));
    }
    if (std::isfinite(qp.ub[j])) {
      const double slack = qp.ub[j] - s.z[j];
      upd(r.primal, -slack);
      upd(r.complementarity, std::abs(s.y_ub[j] * slack));
    }
    upd(r.dual, -s.y_lb[j]);
    upd(r.dual, -s.y_ub[j]);
  }
  return r;
}

namespace detail {

// Goldfarb-Idnani dual active-set method for a strictly convex QP. The
// factors J = L^{-T} Q and R (L^{-1} N = Q [R; 0]) are updated with Givens
// rotations, so each iteration costs O(n^2) plus the constraint scan.
class DualActiveSet {
 public:
  DualActiveSet(const QpProblem& qp, const Eigen::MatrixXd& G, const Eigen::VectorXd& g0,
                const QpOptions& opt)
      : qp_(qp), G_(G), g0_(g0), opt_(opt), n_(qp.size()) {
    m_eq_ = qp.A_eq.rows();
    m_in_ = qp.A_in.rows();
    total_ = m_eq_ + m_in_ + 2 * n_;
  }

  QpSolution run() {
    QpSolution sol;
    sol.z = Eigen::VectorXd::Zero(n_);
    sol.y_eq = Eigen::VectorXd::Zero(m_eq_);
    sol.y_in = Eigen::VectorXd::Zero(m_in_);
    sol.y_lb = Eigen::VectorXd::Zero(n_);
    sol.y_ub = Eigen::VectorXd::Zero(n_);

    for (Eigen::Index j = 0; j < n_; ++j) {
      if (qp_.lb[j] > qp_.ub[j]) {
        sol.status = QpStatus::infeasible;
        sol.infeasibility = qp_.lb[j] - qp_.ub[j];
        return sol;
      }
    }

    Eigen::LLT<Eigen::MatrixXd> llt(G_);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("dual active set: Hessian is not positive definite");
    }
    const Eigen::MatrixXd L = llt.matrixL();
    J_ = L.triangularView<Eigen::Lower>()
             .solve(Eigen::MatrixXd::Identity(n_, n_))
             .transpose();
    R_ = Eigen::MatrixXd::Zero(n_, n_);
    active_.clear();
    u_.clear();
    is_active_.assign(static_cast<std::size_t>(total_), false);
    ignored_.assign(static_cast<std::size_t>(total_), false);
    q_ = 0;

    x_ = -llt.solve(g0_);

    const int max_iter = opt_.max_iterations > 0
                             ? opt_.max_iterations
                             : static_cast<int>(20 * (n_ + m_eq_ + m_in_) + 100);
    int iter = 0;

    // Equality constraints first; they never leave the active set.
    for (Eigen::Index i = 0; i < m_eq_; ++i) {
      ++iter;
      const Eigen::VectorXd np = normal(i);
      const Eigen::VectorXd d = J_.transpose() * np;
      const Eigen::VectorXd z = direction(d);
      const Eigen::VectorXd r = dual_direction(d);
      const double zn = z.dot(np);
      const double viol = np.dot(x_) - rhs(i);
      double t = 0.0;
      if (std::abs(zn) > kTiny * (1.0 + np.norm())) t = -viol / zn;
      x_ += t * z;
      for (int k = 0; k < q_; ++k) u_[static_cast<std::size_t>(k)] -= t * r[k];
      Eigen::VectorXd dd = d;
      if (!add_constraint(dd)) {
        if (std::abs(np.dot(x_) - rhs(i)) > feas_tol(i)) {
          sol.status = QpStatus::infeasible;
          sol.infeasibility = std::abs(np.dot(x_) - rhs(i));
          sol.iterations = iter;
          finish(sol);
          return sol;
        }
        continue;  // redundant equality
      }
      active_.push_back(static_cast<int>(i));
      u_.push_back(t);
      is_active_[static_cast<std::size_t>(i)] = true;
    }

    while (true) {
      if (iter >= max_iter) {
        sol.status = QpStatus::max_iterations;
        break;
      }
      ++iter;
      // Most violated inactive inequality; lowest index wins ties.
      Eigen::Index p = -1;
      double worst = 0.0;
      for (Eigen::Index c = m_eq_; c < total_; ++c) {
        if (is_active_[static_cast<std::size_t>(c)] || ignored_[static_cast<std::size_t>(c)] ||
            !finite_constraint(c)) {
          continue;
        }
        const double s = slack(c);
        if (s < -feas_tol(c) && s < worst) {
          worst = s;
          p = c;
        }
      }
      if (p < 0) {
        sol.status = QpStatus::optimal;
        break;
      }

      double u_p = 0.0;
      const Eigen::VectorXd np = normal(p);
      bool added = false;
      while (!added) {
        if (iter >= max_iter) break;
        Eigen::VectorXd d = J_.transpose() * np;
        const Eigen::VectorXd z = direction(d);
        const Eigen::VectorXd r = dual_direction(d);

        double t1 = kInf;
        int drop = -1;
        for (int k = 0; k < q_; ++k) {
          if (active_[static_cast<std::size_t>(k)] < m_eq_) continue;
          if (r[k] > 0.0) {
            const double ratio = u_[static_cast<std::size_t>(k)] / r[k];
            if (ratio < t1) {
              t1 = ratio;
              drop = k;
            }
          }
        }
        const double zn = z.dot(np);
        const double s_p = slack(p);
        const double tail = q_ < n_ ? d.tail(n_ - q_).norm() : 0.0;
        const double t2 = (tail > 1e-10 * d.norm() && zn > 0.0) ? -s_p / zn : kInf;

        if (!std::isfinite(t1) && !std::isfinite(t2)) {
          // Incremental updates drift on degenerate vertices; re-solve the
          // working set before trusting a small violation.
          if (-s_p <= 1e-6 * (1.0 + std::abs(rhs(p)))) refine();
          if (-slack(p) <= 1e-9 * (1.0 + std::abs(rhs(p)))) {
            // Dependent on the active set and satisfied to round-off.
            ignored_[static_cast<std::size_t>(p)] = true;
            break;
          }
          sol.status = QpStatus::infeasible;
          sol.infeasibility = -slack(p);
          sol.iterations = iter;
          finish(sol);
          return sol;
        }
        if (!std::isfinite(t2)) {
          for (int k = 0; k < q_; ++k) u_[static_cast<std::size_t>(k)] -= t1 * r[k];
          u_p += t1;
          drop_constraint(drop);
          ++iter;
          continue;
        }
        const double t = std::min(t1, t2);
        x_ += t * z;
        for (int k = 0; k < q_; ++k) u_[static_cast<std::size_t>(k)] -= t * r[k];
        u_p += t;
        if (t2 <= t1) {
          if (!add_constraint(d)) {
            ignored_[static_cast<std::size_t>(p)] = true;
            break;
          }
          active_.push_back(static_cast<int>(p));
          u_.push_back(u_p);
          is_active_[static_cast<std::size_t>(p)] = true;
          added = true;
        } else {
          drop_constraint(drop);
          ++iter;
        }
      }
    }
    sol.iterations = iter;
    if (sol.status == QpStatus::optimal) refine();
    finish(sol);
    return sol;
  }

 private:
  // One dense solve of the KKT system for the final working set. Replaces the
  // incrementally updated iterate when it reduces the residual.
  void refine() {
    if (q_ == 0) return;
    const Eigen::Index m = q_;
    Eigen::MatrixXd N(n_, m);
    Eigen::VectorXd b(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      N.col(k) = normal(active_[static_cast<std::size_t>(k)]);
      b[k] = rhs(active_[static_cast<std::size_t>(k)]);
    }
    Eigen::VectorXd u(m);
    for (Eigen::Index k = 0; k < m; ++k) u[k] = u_[static_cast<std::size_t>(k)];
    auto residual = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& mult) {
      const double stat = (G_ * x + g0_ - N * mult).cwiseAbs().maxCoeff();
      const double prim = (N.transpose() * x - b).cwiseAbs().maxCoeff();
      return std::max(stat, prim);
    };
    const double current = residual(x_, u);
    if (current <= 0.01 * opt_.tol) return;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n_ + m, n_ + m);
    K.topLeftCorner(n_, n_) = G_;
    K.topRightCorner(n_, m) = -N;
    K.bottomLeftCorner(m, n_) = N.transpose();
    Eigen::VectorXd rhs_vec(n_ + m);
    rhs_vec.head(n_) = -g0_;
    rhs_vec.tail(m) = b;
    const Eigen::VectorXd sol = K.partialPivLu().solve(rhs_vec);
    if (!sol.allFinite()) return;
    Eigen::VectorXd x_new = sol.head(n_);
    Eigen::VectorXd u_new = sol.tail(m);
    for (Eigen::Index k = 0; k < m; ++k) {
      if (active_[static_cast<std::size_t>(k)] >= m_eq_ && u_new[k] < 0.0) u_new[k] = 0.0;
    }
    if (residual(x_new, u_new) < current) {
      x_ = x_new;
      for (Eigen::Index k = 0; k < m; ++k) u_[static_cast<std::size_t>(k)] = u_new[k];
    }
  }

  static constexpr double kTiny = 1e-14;

  bool finite_constraint(Eigen::Index c) const {
    if (c < m_eq_ + m_in_) return true;
    const Eigen::Index j = (c - m_eq_ - m_in_) % n_;
    return c < m_eq_ + m_in_ + n_ ? std::isfinite(qp_.lb[j]) : std::isfinite(qp_.ub[j]);
  }

  // Constraint c in the form n_c^T x >= b_c (or == for equalities).
  Eigen::VectorXd normal(Eigen::Index c) const {
    if (c < m_eq_) return qp_.A_eq.row(c).transpose();
    if (c < m_eq_ + m_in_) return -qp_.A_in.row(c - m_eq_).transpose();
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n_);
    const Eigen::Index j = (c - m_eq_ - m_in_) % n_;
    e[j] = c < m_eq_ + m_in_ + n_ ? 1.0 : -1.0;
    return e;
  }

  double rhs(Eigen::Index c) const {
    if (c < m_eq_) return qp_.b_eq[c];
    if (c < m_eq_ + m_in_) return -qp_.b_in[c - m_eq_];
    const Eigen::Index j = (c - m_eq_ - m_in_) % n_;
    return c < m_eq_ + m_in_ + n_ ? qp_.lb[j] : -qp_.ub[j];
  }

  double slack(Eigen::Index c) const {
    if (c < m_eq_) return qp_.A_eq.row(c).dot(x_) - qp_.b_eq[c];
    if (c < m_eq_ + m_in_) return qp_.b_in[c - m_eq_] - qp_.A_in.row(c - m_eq_).dot(x_);
    const Eigen::Index j = (c - m_eq_ - m_in_) % n_;
    return c < m_eq_ + m_in_ + n_ ? x_[j] - qp_.lb[j] : qp_.ub[j] - x_[j];
  }

  double feas_tol(Eigen::Index c) const { return 1e-12 * (1.0 + std::abs(rhs(c))); }

  Eigen::VectorXd direction(const Eigen::VectorXd& d) const {
    if (q_ >= n_) return Eigen::VectorXd::Zero(n_);
    return J_.rightCols(n_ - q_) * d.tail(n_ - q_);
  }

  Eigen::VectorXd dual_direction(const Eigen::VectorXd& d) const {
    if (q_ == 0) return Eigen::VectorXd();
    return R_.topLeftCorner(q_, q_).triangularView<Eigen::Upper>().solve(d.head(q_));
  }

  static void givens(double a, double b, double& c, double& s, double& h) {
    h = std::hypot(a, b);
    if (h == 0.0) {
      c = 1.0;
      s = 0.0;
      return;
    }
    c = a / h;
    s = b / h;
  }

  void rotate_columns(Eigen::Index i, Eigen::Index j, double c, double s) {
    for (Eigen::Index k = 0; k < n_; ++k) {
      const double a = J_(k, i);
      const double b = J_(k, j);
      J_(k, i) = c * a + s * b;
      J_(k, j) = -s * a + c * b;
    }
  }

  bool add_constraint(Eigen::VectorXd& d) {
    for (Eigen::Index j = n_ - 1; j > q_; --j) {
      if (d[j] == 0.0) continue;
      double c, s, h;
      givens(d[j - 1], d[j], c, s, h);
      d[j - 1] = h;
      d[j] = 0.0;
      rotate_columns(j - 1, j, c, s);
    }
    if (q_ >= n_ || std::abs(d[q_]) <= 1e-12 * (1.0 + d.head(q_ + 1).norm())) return false;
    R_.col(q_).head(q_ + 1) = d.head(q_ + 1);
    ++q_;
    return true;
  }

  void drop_constraint(int l) {
    is_active_[static_cast<std::size_t>(active_[static_cast<std::size_t>(l)])] = false;
    active_.erase(active_.begin() + l);
    u_.erase(u_.begin() + l);
    for (int k = l; k < q_ - 1; ++k) R_.col(k) = R_.col(k + 1);
    R_.col(q_ - 1).setZero();
    --q_;
    for (Eigen::Index j = l; j < q_; ++j) {
      double c, s, h;
      givens(R_(j, j), R_(j + 1, j), c, s, h);
      if (h == 0.0) continue;
      for (Eigen::Index k = j; k < q_; ++k) {
        const double a = R_(j, k);
        const double b = R_(j + 1, k);
        R_(j, k) = c * a + s * b;
        R_(j + 1, k) = -s * a + c * b;
      }
      R_(j + 1, j) = 0.0;
      rotate_columns(j, j + 1, c, s);
    }
  }

  void finish(QpSolution& sol) const {
    sol.z = x_;
    for (int k = 0; k < q_; ++k) {
      const Eigen::Index c = active_[static_cast<std::size_t>(k)];
      const double u = u_[static_cast<std::size_t>(k)];
      if (c < m_eq_) {
        sol.y_eq[c] = -u;
      } else if (c < m_eq_ + m_in_) {
        sol.y_in[c - m_eq_] = u;
      } else {
        const Eigen::Index j = (c - m_eq_ - m_in_) % n_;
        if (c < m_eq_ + m_in_ + n_) {
          sol.y_lb[j] = u;
        } else {
          sol.y_ub[j] = u;
        }
      }
    }
  }

  const QpProblem& qp_;
  const Eigen::MatrixXd& G_;
  const Eigen::VectorXd& g0_;
  QpOptions opt_;
  Eigen::Index n_;
  Eigen::Index m_eq_{0};
  Eigen::Index m_in_{0};
  Eigen::Index total_{0};

  Eigen::MatrixXd J_;
  Eigen::MatrixXd R_;
  Eigen::VectorXd x_;
  std::vector<int> active_;
  std::vector<double> u_;
  std::vector<bool> is_active_;
  std::vector<bool> ignored_;
  int q_{0};
};

inline bool is_positive_definite(const Eigen::MatrixXd& H, double scale) {
  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
  return ldlt.vectorD().minCoeff() > 1e-9 * scale;
}

}  // namespace detail

// Dense active-set QP solver. A positive definite H goes straight to the dual
// active-set method; a singular H is handled by proximal-point iterations
// z+ = argmin f(z) + (eps / 2) |z - z_k|^2, each solved by the same method.
inline QpSolution solve_qp(const QpProblem& qp, const QpOptions& opt = {}) {
  qp.validate();
  const Eigen::Index n = qp.size();
  const double scale = std::max(1.0, n > 0 ? qp.H.diagonal().cwiseAbs().maxCoeff() : 1.0);

  QpSolution sol;
  if (detail::is_positive_definite(qp.H, scale)) {
    detail::DualActiveSet solver(qp, qp.H, qp.g, opt);
    sol = solver.run();
  } else {
    const double eps = opt.prox_weight * scale;
    const Eigen::MatrixXd G = qp.H + eps * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd center = Eigen::VectorXd::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) center[j] = std::clamp(0.0, qp.lb[j], qp.ub[j]);
    int total_iters = 0;
    for (int it = 0; it < opt.max_prox_iterations; ++it) {
      const Eigen::VectorXd g0 = qp.g - eps * center;
      detail::DualActiveSet solver(qp, G, g0, opt);
      sol = solver.run();
      total_iters += sol.iterations;
      sol.prox_iterations = it + 1;
      if (sol.status != QpStatus::optimal) break;
      const double step = (sol.z - center).cwiseAbs().maxCoeff();
      center = sol.z;
      if (kkt_residuals(qp, sol).max() <= 0.1 * opt.tol || step <= 1e-15 * (1.0 + sol.z.norm())) {
        break;
      }
    }
    sol.iterations = total_iters;
  }
  sol.objective = qp.objective(sol.z);
  const KktResiduals r = kkt_residuals(qp, sol);
  sol.kkt_residual = r.max();
  if (sol.status == QpStatus::optimal && sol.kkt_residual > opt.tol) {
    sol.status = QpStatus::max_iterations;
  }
  return sol;
}

// Text dump of a QP: dimensions, then every block as dense rows with 17
// significant digits.
inline void dump_qp(const QpProblem& qp, std::ostream& out) {
  out << std::setprecision(17);
  out << "n " << qp.size() << " m_eq " << qp.A_eq.rows() << " m_in " << qp.A_in.rows() << '\n';
  auto write_matrix = [&](const char* name, const Eigen::MatrixXd& M) {
    out << name << ' ' << M.rows() << ' ' << M.cols() << '\n';
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      for (Eigen::Index j = 0; j < M.cols(); ++j) out << (j ? " " : "") << M(i, j);
      out << '\n';
    }
  };
  auto write_vector = [&](const char* name, const Eigen::VectorXd& v) {
    out << name << ' ' << v.size() << '\n';
    for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
    out << '\n';
  };
  write_matrix("H", qp.H);
  write_vector("g", qp.g);
  write_matrix("A_eq", qp.A_eq);
  write_vector("b_eq", qp.b_eq);
  write_matrix("A_in", qp.A_in);
  write_vector("b_in", qp.b_in);
  write_vector("lb", qp.lb);
  write_vector("ub", qp.ub);
}

inline void dump_qp(const QpProblem& qp, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write QP dump '" + path + "'");
  dump_qp(qp, out);
}

}  // namespace pcc
