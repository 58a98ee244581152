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

namespace pcc {

// Bound applied to every evaluated grade estimate (rad).
inline constexpr double kMaxGradeRad = 0.3;

// Local quadratic road-angle model theta(s) = a0 + a1 s + a2 s^2 in absolute
// route coordinates, trusted on [s_anchor, valid_to].
struct GradeCoeffs {
  double a0{0.0};
  double a1{0.0};
  double a2{0.0};
  double s_anchor{0.0};
  double valid_to{0.0};

  bool in_window(double s) const { return s >= s_anchor && s <= valid_to; }
};

// Grade value and its derivative along the route at one position.
struct GradeSample {
  double theta{0.0};
  double slope{0.0};      // d theta / d s
  double curvature{0.0};  // d2 theta / d s2
};

inline GradeSample sample_grade(const GradeCoeffs& c, double s) {
  const double raw = c.a0 + c.a1 * s + c.a2 * s * s;
  if (raw > kMaxGradeRad) return {kMaxGradeRad, 0.0, 0.0};
  if (raw < -kMaxGradeRad) return {-kMaxGradeRad, 0.0, 0.0};
  return {raw, c.a1 + 2.0 * c.a2 * s, 2.0 * c.a2};
}

inline double eval_grade(const GradeCoeffs& c, double s) { return sample_grade(c, s).theta; }

}  // namespace pcc
