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
#include <span>
#include <vector>

namespace pcc {

// Least-squares polynomial in raw (unshifted) coordinates:
// p(x) = coeffs[0] + coeffs[1] x + coeffs[2] x^2 + ...
struct PolyFit {
  Eigen::VectorXd coeffs;       // raw basis, length max_order + 1 (unused orders are 0)
  int order{-1};                // effective order after degradation, -1 when no data
  std::size_t count{0};         // samples used
  double max_residual{0.0};     // max |p(x_i) - y_i| over the samples
  double optimality_residual{0.0};  // |Phi^T (Phi a - y) + lambda a|_inf in the scaled basis
};

inline double eval_poly(const Eigen::VectorXd& coeffs, double x) {
  double acc = 0.0;
  for (Eigen::Index k = coeffs.size() - 1; k >= 0; --k) acc = acc * x + coeffs[k];
  return acc;
}

inline double eval_poly_derivative(const Eigen::VectorXd& coeffs, double x) {
  double acc = 0.0;
  for (Eigen::Index k = coeffs.size() - 1; k >= 1; --k) {
    acc = acc * x + static_cast<double>(k) * coeffs[k];
  }
  return acc;
}

namespace detail {

inline std::size_t count_distinct(std::span<const double> x) {
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

// Maps coefficients of sum_k alpha_k ((x - center) / scale)^k to the raw basis.
inline Eigen::VectorXd unscale_coefficients(const Eigen::VectorXd& alpha, double center,
                                            double scale, int max_order) {
  Eigen::VectorXd raw = Eigen::VectorXd::Zero(max_order + 1);
  for (Eigen::Index k = 0; k < alpha.size(); ++k) {
    const double lead = alpha[k] / std::pow(scale, static_cast<double>(k));
    // (x - c)^k = sum_i binom(k, i) x^i (-c)^(k - i)
    double binom = 1.0;
    for (Eigen::Index i = 0; i <= k; ++i) {
      raw[i] += lead * binom * std::pow(-center, static_cast<double>(k - i));
      binom = binom * static_cast<double>(k - i) / static_cast<double>(i + 1);
    }
  }
  return raw;
}

}  // namespace detail

// Damped least squares fit of y against [1, x, ..., x^max_order]. The normal
// equations are formed in the shifted/scaled coordinate (x - center) / scale.
// The order degrades to (distinct abscissae - 1) when the data cannot support
// the requested one.
inline PolyFit fit_polynomial(std::span<const double> x, std::span<const double> y, int max_order,
                              double center, double scale, double lambda) {
  PolyFit fit;
  fit.coeffs = Eigen::VectorXd::Zero(max_order + 1);
  fit.count = x.size();
  if (x.empty()) return fit;

  const int order =
      std::min<int>(max_order, static_cast<int>(detail::count_distinct(x)) - 1);
  fit.order = order;
  const Eigen::Index cols = order + 1;
  const Eigen::Index rows = static_cast<Eigen::Index>(x.size());
  if (scale <= 0.0) scale = 1.0;

  Eigen::MatrixXd phi(rows, cols);
  Eigen::VectorXd rhs(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double xi = (x[i] - center) / scale;
    double power = 1.0;
    for (Eigen::Index k = 0; k < cols; ++k) {
      phi(i, k) = power;
      power *= xi;
    }
    rhs[i] = y[i];
  }
  Eigen::MatrixXd normal = phi.transpose() * phi;
  normal.diagonal().array() += lambda;
  const Eigen::VectorXd alpha = normal.ldlt().solve(phi.transpose() * rhs);

  const Eigen::VectorXd residual = phi * alpha - rhs;
  fit.optimality_residual =
      (phi.transpose() * residual + lambda * alpha).cwiseAbs().maxCoeff();
  fit.max_residual = residual.cwiseAbs().maxCoeff();
  fit.coeffs = detail::unscale_coefficients(alpha, center, scale, max_order);
  return fit;
}

}  // namespace pcc
