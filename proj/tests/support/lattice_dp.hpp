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

#include <cmath>
#include <limits>
#include <vector>

#include "pcc_lmpc/ocp_solver.hpp"

namespace pcc::testing {

// Exact dynamic programming for a frictionless vehicle with tau = t_s, where
// integer force levels keep every state on the lattice
//   s = i ds, v = j dv, F = l dF,   dv = t_s dF / m,   ds = t_s dv.
// Valid only for flat, resistance-free problems whose single pin is at N.
struct LatticeSpec {
  int n_s{50};
  int n_v{30};
  int half_F{5};  // F levels -half_F .. half_F
  double dF{100.0};
};

struct LatticeResult {
  double objective{std::numeric_limits<double>::infinity()};
  std::vector<int> force_levels;  // optimal input per step, in units of dF
};

inline LatticeResult lattice_dp(const OcpProblem& prob, const LatticeSpec& spec) {
  const VehicleParams& p = prob.vehicle;
  const double dv = p.t_s * spec.dF / p.m;
  const double ds = p.t_s * dv;
  const int nF = 2 * spec.half_F + 1;
  const auto idx = [&](int i, int j, int l) { return (i * spec.n_v + j) * nF + (l + spec.half_F); };
  const auto cost = [&](int j, int l_in) {
    const double v = j * dv;
    const double u = l_in * spec.dF;
    VehicleState x{0.0, v, 0.0};
    return ocp_stage_cost(prob, x, ControlInput{std::max(u, 0.0), std::min(u, 0.0)});
  };
  const VehicleState goal = prob.pins.back().x;
  const int gi = static_cast<int>(std::lround(goal.s / ds));
  const int gj = static_cast<int>(std::lround(goal.v / dv));
  const int gl = static_cast<int>(std::lround(goal.F / spec.dF));
  const double inf = std::numeric_limits<double>::infinity();
  const std::size_t n_nodes = static_cast<std::size_t>(spec.n_s) * spec.n_v * nF;

  std::vector<std::vector<double>> V(static_cast<std::size_t>(prob.N) + 1,
                                     std::vector<double>(n_nodes, inf));
  std::vector<std::vector<int>> policy(static_cast<std::size_t>(prob.N),
                                       std::vector<int>(n_nodes, 0));
  V.back()[static_cast<std::size_t>(idx(gi, gj, gl))] = 0.0;
  for (int k = prob.N - 1; k >= 0; --k) {
    auto& Vk = V[static_cast<std::size_t>(k)];
    const auto& Vn = V[static_cast<std::size_t>(k) + 1];
    for (int i = 0; i < spec.n_s; ++i) {
      for (int j = 0; j < spec.n_v; ++j) {
        for (int l = -spec.half_F; l <= spec.half_F; ++l) {
          const int i2 = i + j;
          const int j2 = j + l;
          if (i2 >= spec.n_s || j2 < 0 || j2 >= spec.n_v) continue;
          double best = inf;
          int arg = 0;
          for (int a = -spec.half_F; a <= spec.half_F; ++a) {
            const double next = Vn[static_cast<std::size_t>(idx(i2, j2, a))];
            if (!std::isfinite(next)) continue;
            const double c = cost(j, a) + next;
            if (c < best) {
              best = c;
              arg = a;
            }
          }
          Vk[static_cast<std::size_t>(idx(i, j, l))] = best;
          policy[static_cast<std::size_t>(k)][static_cast<std::size_t>(idx(i, j, l))] = arg;
        }
      }
    }
  }

  LatticeResult out;
  int i = static_cast<int>(std::lround(prob.x0.s / ds));
  int j = static_cast<int>(std::lround(prob.x0.v / dv));
  int l = static_cast<int>(std::lround(prob.x0.F / spec.dF));
  out.objective = V.front()[static_cast<std::size_t>(idx(i, j, l))];
  if (!std::isfinite(out.objective)) return out;
  for (int k = 0; k < prob.N; ++k) {
    const int a = policy[static_cast<std::size_t>(k)][static_cast<std::size_t>(idx(i, j, l))];
    out.force_levels.push_back(a);
    const int i2 = i + j;
    const int j2 = j + l;
    i = i2;
    j = j2;
    l = a;
  }
  return out;
}

}  // namespace pcc::testing
