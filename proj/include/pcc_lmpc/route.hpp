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
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pcc_lmpc/common.hpp"
#include "pcc_lmpc/grade_model.hpp"
#include "pcc_lmpc/vehicle_model.hpp"

namespace pcc {

struct RouteSample {
  double s{0.0};      // m
  double theta{0.0};  // rad
};

class RouteParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Ground-truth grade table, linearly interpolated in position. Immutable after
// construction.
class RouteProfile {
 public:
  RouteProfile() = default;

  RouteProfile(std::vector<RouteSample> samples, double length)
      : samples_(std::move(samples)), length_(length) {
    validate();
  }

  explicit RouteProfile(std::vector<RouteSample> samples)
      : samples_(std::move(samples)), length_(samples_.empty() ? 0.0 : samples_.back().s) {
    validate();
  }

  const std::vector<RouteSample>& samples() const { return samples_; }
  double length() const { return length_; }

  // Interpolated grade and its slope. Positions past the table keep the last
  // value (slope zero).
  GradeSample sample(double s) const {
    if (!(s >= 0.0)) throw std::invalid_argument("grade_at: position must be nonnegative");
    if (samples_.size() == 1 || s >= samples_.back().s) return {samples_.back().theta, 0.0};
    auto it = std::upper_bound(samples_.begin(), samples_.end(), s,
                               [](double value, const RouteSample& r) { return value < r.s; });
    const RouteSample& hi = *it;
    const RouteSample& lo = *(it - 1);
    const double slope = (hi.theta - lo.theta) / (hi.s - lo.s);
    return {lo.theta + slope * (s - lo.s), slope};
  }

  static RouteProfile parse_csv(std::istream& in, const std::string& source = "<route>") {
    std::string line;
    std::size_t line_no = 0;
    auto fail = [&](const std::string& msg) {
      throw RouteParseError(source + ":" + std::to_string(line_no) + ": " + msg);
    };
    if (!std::getline(in, line)) {
      line_no = 1;
      fail("empty file, expected header 's_m,grade_rad'");
    }
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "s_m,grade_rad") fail("expected header 's_m,grade_rad', got '" + line + "'");

    std::vector<RouteSample> samples;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) fail("expected two comma-separated values");
      RouteSample r;
      try {
        std::size_t used = 0;
        const std::string a = line.substr(0, comma);
        const std::string b = line.substr(comma + 1);
        r.s = std::stod(a, &used);
        if (used != a.size()) fail("trailing characters in position");
        r.theta = std::stod(b, &used);
        if (used != b.size()) fail("trailing characters in grade");
      } catch (const std::logic_error&) {
        fail("malformed number");
      }
      if (!std::isfinite(r.s) || !std::isfinite(r.theta)) fail("non-finite value");
      if (samples.empty() && r.s != 0.0) fail("first sample must be at s = 0");
      if (!samples.empty() && !(r.s > samples.back().s)) fail("positions must strictly increase");
      if (std::abs(r.theta) >= 0.3) fail("grade magnitude must be below 0.3 rad");
      samples.push_back(r);
    }
    if (samples.empty()) fail("no samples");
    return RouteProfile(std::move(samples));
  }

  static RouteProfile load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open route file '" + path + "'");
    return parse_csv(in, path);
  }

  void write_csv(std::ostream& out) const {
    out << "s_m,grade_rad\n";
    out << std::setprecision(12);
    for (const auto& r : samples_) out << r.s << ',' << r.theta << '\n';
  }

 private:
  void validate() const {
    if (samples_.empty()) throw std::invalid_argument("route needs at least one sample");
    if (samples_.front().s != 0.0) throw std::invalid_argument("route must start at s = 0");
    for (std::size_t i = 0; i < samples_.size(); ++i) {
      require_finite(samples_[i].s, "route position");
      require_finite(samples_[i].theta, "route grade");
      if (std::abs(samples_[i].theta) >= 0.3) {
        throw std::invalid_argument("route grade magnitude must be below 0.3 rad");
      }
      if (i > 0 && !(samples_[i].s > samples_[i - 1].s)) {
        throw std::invalid_argument("route positions must strictly increase");
      }
    }
    if (!(length_ >= 0.0) || samples_.back().s < length_) {
      throw std::invalid_argument("route table must cover the route length");
    }
  }

  std::vector<RouteSample> samples_;
  double length_{0.0};
};

inline double grade_at(const RouteProfile& route, double s) { return route.sample(s).theta; }

// Goal tolerance ball around x_f = (s_f, 0, 0).
struct ArrivalTolerance {
  double eps_s{0.5};
  double eps_v{0.05};
  double eps_F{50.0};
};

inline bool is_arrived(const VehicleState& x, double route_length, const ArrivalTolerance& tol) {
  return x.s >= route_length - tol.eps_s && x.v <= tol.eps_v;
}

struct PlantState {
  VehicleState x;
  int k{0};
  bool arrived{false};
};

inline PlantState make_plant(const VehicleState& x0, double route_length,
                             const ArrivalTolerance& tol) {
  return {x0, 0, is_arrived(x0, route_length, tol)};
}

// Advances the true vehicle one step with the true grade. Inputs are projected
// onto the admissible box first.
inline PlantState plant_step(const PlantState& ps, const ControlInput& u, const RouteProfile& route,
                             const VehicleParams& p, const ArrivalTolerance& tol = {}) {
  if (ps.arrived) throw ContractViolation("plant_step: vehicle already arrived");
  PlantState next;
  next.x = step_dynamics(ps.x, saturate(u, p), grade_at(route, ps.x.s), p);
  next.k = ps.k + 1;
  next.arrived = is_arrived(next.x, route.length(), tol);
  return next;
}

// Bundled synthetic routes.
namespace routes {

inline RouteProfile flat(double length) {
  if (length <= 0.0) return RouteProfile({{0.0, 0.0}}, 0.0);
  return RouteProfile({{0.0, 0.0}, {length, 0.0}});
}

// Two sine hills over 1 km, peak grade 0.05 rad.
inline RouteProfile rolling_1km() {
  std::vector<RouteSample> samples;
  constexpr double kLength = 1000.0;
  for (int i = 0; i <= 200; ++i) {
    const double s = 5.0 * i;
    const double theta = 0.05 * std::sin(4.0 * std::numbers::pi * s / kLength);
    samples.push_back({s, std::abs(theta) < 1e-15 ? 0.0 : theta});
  }
  return RouteProfile(std::move(samples), kLength);
}

// 5 km of mixed grades, |theta| <= 0.08 rad, flat at both ends.
inline RouteProfile hills_5km() {
  std::vector<RouteSample> samples;
  constexpr double kLength = 5000.0;
  constexpr double kPi = std::numbers::pi;
  for (int i = 0; i <= 1000; ++i) {
    const double s = 5.0 * i;
    const double taper = std::clamp(std::min(s, kLength - s) / 250.0, 0.0, 1.0);
    const double theta = taper * (0.045 * std::sin(2.0 * kPi * s / 1400.0) +
                                  0.025 * std::sin(2.0 * kPi * s / 520.0 + 0.7) +
                                  0.010 * std::sin(2.0 * kPi * s / 230.0 + 1.9));
    samples.push_back({s, std::abs(theta) < 1e-15 ? 0.0 : theta});
  }
  return RouteProfile(std::move(samples), kLength);
}

}  // namespace routes

}  // namespace pcc
