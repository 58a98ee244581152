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
#include <deque>
#include <numbers>
#include <optional>
#include <vector>

#include "pcc_lmpc/grade_model.hpp"
#include "pcc_lmpc/polyfit.hpp"
#include "pcc_lmpc/vehicle_model.hpp"

namespace pcc {

struct GradeObservation {
  double s{0.0};          // absolute route position of the first state
  double theta_bar{0.0};  // grade recovered by inverting the dynamics
  int iteration{0};
};

// Recovers the road angle that produced the logged transition x_k -> x_next.
// Returns nullopt when the transition carries no grade information: the plant
// clamped the velocity at zero, or the implied force is not a valid grade.
inline std::optional<GradeObservation> invert_grade(const VehicleState& x_k,
                                                    const VehicleState& x_next,
                                                    const VehicleParams& p, int iteration = 0) {
  if (x_next.v <= 0.0) return std::nullopt;
  const double total_resistance = p.m * (x_next.v - x_k.v) / p.t_s - x_k.F;
  const double gravity_and_rolling = -total_resistance - p.drag_coefficient() * x_k.v * x_k.v;
  // m g (c_r cos(theta) + sin(theta)) = m g sqrt(1 + c_r^2) sin(theta + atan(c_r))
  const double amplitude = p.m * p.g * std::sqrt(1.0 + p.c_r * p.c_r);
  const double ratio = gravity_and_rolling / amplitude;
  if (!std::isfinite(ratio) || std::abs(ratio) > 1.0) return std::nullopt;
  const double theta = std::asin(ratio) - std::atan(p.c_r);
  if (std::abs(theta) >= std::numbers::pi / 2) return std::nullopt;
  return GradeObservation{x_k.s, theta, iteration};
}

// Observations pooled over the most recent iterations, each iteration kept
// sorted by position.
class ObservationStore {
 public:
  explicit ObservationStore(std::size_t max_iterations = 5) : max_iterations_(max_iterations) {}

  // Opens a new iteration bucket; the oldest bucket is dropped past the cap.
  void begin_iteration(int iteration) {
    buckets_.push_back(Bucket{iteration, {}});
    while (buckets_.size() > max_iterations_) buckets_.pop_front();
  }

  void add(const GradeObservation& obs) {
    if (buckets_.empty() || buckets_.back().iteration != obs.iteration) {
      begin_iteration(obs.iteration);
    }
    auto& items = buckets_.back().items;
    auto pos = std::upper_bound(items.begin(), items.end(), obs.s,
                                [](double s, const GradeObservation& o) { return s < o.s; });
    items.insert(pos, obs);
  }

  // All observations with s_lo <= s <= s_hi, across stored iterations.
  std::vector<GradeObservation> window(double s_lo, double s_hi) const {
    std::vector<GradeObservation> out;
    for (const auto& b : buckets_) {
      auto lo = std::lower_bound(b.items.begin(), b.items.end(), s_lo,
                                 [](const GradeObservation& o, double s) { return o.s < s; });
      for (auto it = lo; it != b.items.end() && it->s <= s_hi; ++it) out.push_back(*it);
    }
    return out;
  }

  // Observation closest in position to s, if any.
  std::optional<GradeObservation> nearest(double s) const {
    std::optional<GradeObservation> best;
    for (const auto& b : buckets_) {
      auto it = std::lower_bound(b.items.begin(), b.items.end(), s,
                                 [](const GradeObservation& o, double x) { return o.s < x; });
      for (auto cand : {it, it == b.items.begin() ? it : it - 1}) {
        if (cand == b.items.end()) continue;
        if (!best || std::abs(cand->s - s) < std::abs(best->s - s)) best = *cand;
      }
    }
    return best;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& b : buckets_) n += b.items.size();
    return n;
  }
  std::size_t iterations() const { return buckets_.size(); }
  std::size_t max_iterations() const { return max_iterations_; }

 private:
  struct Bucket {
    int iteration;
    std::vector<GradeObservation> items;
  };
  std::size_t max_iterations_;
  std::deque<Bucket> buckets_;
};

struct GradeFit {
  GradeCoeffs coeffs;
  int order{-1};                     // 2 = full quadratic; lower when data is scarce
  std::size_t count{0};              // observations inside the window
  bool no_data{false};               // store was empty; flat-road coefficients returned
  bool empty_window{false};          // nearest observation used as a constant
  double optimality_residual{0.0};   // scaled-basis normal equation residual
};

// Local quadratic grade model over [s_now, s_now + lookahead] from all pooled
// iterations.
inline GradeFit fit_local_quadratic(const ObservationStore& store, double s_now, double lookahead,
                                    double lambda_reg = 1e-9) {
  GradeFit out;
  out.coeffs.s_anchor = s_now;
  out.coeffs.valid_to = s_now + lookahead;
  const auto obs = store.window(s_now, s_now + lookahead);
  out.count = obs.size();
  if (obs.empty()) {
    const auto near = store.nearest(s_now);
    if (!near) {
      out.no_data = true;
      return out;
    }
    out.empty_window = true;
    out.order = 0;
    out.coeffs.a0 = near->theta_bar;
    return out;
  }
  std::vector<double> s(obs.size()), theta(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    s[i] = obs[i].s;
    theta[i] = obs[i].theta_bar;
  }
  const PolyFit fit = fit_polynomial(s, theta, 2, s_now, lookahead, lambda_reg);
  out.order = fit.order;
  out.optimality_residual = fit.optimality_residual;
  out.coeffs.a0 = fit.coeffs[0];
  out.coeffs.a1 = fit.coeffs[1];
  out.coeffs.a2 = fit.coeffs[2];
  return out;
}

}  // namespace pcc
