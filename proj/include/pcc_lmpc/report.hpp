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

// Campaign output files: summary, oracle trajectory and the plot tables
// regenerated from iteration logs.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "pcc_lmpc/config.hpp"
#include "pcc_lmpc/sim_harness.hpp"

namespace pcc {

inline Json summary_json(const CampaignReport& r, const CampaignConfig& cfg) {
  Json j;
  j["route"] = r.route;
  j["route_length_m"] = r.route_length;
  j["N"] = r.N;
  j["N_f"] = r.N_f;
  j["t_s"] = r.t_s;
  j["lookahead_m"] = r.lookahead_m;
  j["baseline_v_ref"] = r.baseline_v_ref;
  Json its = Json::array();
  for (const auto& s : r.iterations) {
    its.push_back({{"iteration", s.iteration},
                   {"total_fuel", s.total_fuel},
                   {"normalized_fuel", s.normalized_fuel},
                   {"arrival_step", s.arrival_step},
                   {"fallback_steps", s.fallback_steps},
                   {"mean_solver_iterations", s.mean_solver_iterations},
                   {"trajectory_file", s.trajectory_file}});
  }
  j["iterations"] = its;
  j["config"] = config_to_json(cfg);
  return j;
}

inline std::string oracle_csv(const OracleResult& orc, const FuelParams& fuel) {
  std::ostringstream out;
  out << "k,s_m,v_mps,F_N,Ft_N,Fb_N,fuel\n" << std::setprecision(12);
  for (std::size_t k = 0; k < orc.x.size(); ++k) {
    const ControlInput u = k < orc.u.size() ? orc.u[k] : ControlInput{};
    const double h = k < orc.u.size() ? fuel_rate(std::max(orc.x[k].v, 0.0), u.F_t, fuel) : 0.0;
    out << k << ',' << orc.x[k].s << ',' << orc.x[k].v << ',' << orc.x[k].F << ',' << u.F_t << ','
        << u.F_b << ',' << h << '\n';
  }
  return out.str();
}

inline Json oracle_json(const OracleResult& orc) {
  Json j;
  j["status"] = to_string(orc.status);
  j["objective"] = std::isfinite(orc.objective) ? Json(orc.objective) : Json(nullptr);
  j["sqp_iterations"] = orc.iterations;
  j["max_violation"] = orc.max_violation;
  j["steps"] = orc.u.size();
  return j;
}

// iter_XX.csv files of a campaign directory, in iteration order.
inline std::vector<IterationLog> read_campaign_logs(const std::filesystem::path& dir) {
  static const std::regex name(R"(iter_\d+\.csv)");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && std::regex_match(e.path().filename().string(), name)) {
      files.push_back(e.path());
    }
  }
  if (files.empty()) throw LogParseError(dir.string() + ": no iteration logs (iter_NN.csv)");
  std::vector<IterationLog> logs;
  for (const auto& f : files) {
    std::ifstream in(f);
    if (!in) throw LogParseError(f.string() + ": cannot open");
    logs.push_back(read_iteration_csv(in, f.string()));
  }
  std::sort(logs.begin(), logs.end(),
            [](const IterationLog& a, const IterationLog& b) { return a.iteration < b.iteration; });
  for (std::size_t i = 1; i < logs.size(); ++i) {
    if (logs[i].iteration == logs[i - 1].iteration) {
      throw LogParseError(dir.string() + ": iteration " + std::to_string(logs[i].iteration) +
                          " appears twice");
    }
  }
  return logs;
}

inline constexpr const char* kVelocityTableHeader = "iter,k,s_m,v_mps";
inline constexpr const char* kForceTableHeader = "iter,k,s_m,F_N,Ft_N,Fb_N";

// Rows run from k = 0 to the arrival step of each iteration.
inline void write_report_products(const std::vector<IterationLog>& logs,
                                  const std::filesystem::path& out) {
  std::ostringstream vel, force, fuel;
  vel << kVelocityTableHeader << '\n' << std::setprecision(12);
  force << kForceTableHeader << '\n' << std::setprecision(12);
  for (const auto& log : logs) {
    for (int k = 0; k <= log.arrival_step; ++k) {
      const auto& x = log.x[static_cast<std::size_t>(k)];
      const auto& u = log.u[static_cast<std::size_t>(k)];
      vel << log.iteration << ',' << k << ',' << x.s << ',' << x.v << '\n';
      force << log.iteration << ',' << k << ',' << x.s << ',' << x.F << ',' << u.F_t << ',' << u.F_b
            << '\n';
    }
  }
  CampaignReport rep;
  const double base = logs.empty() ? 0.0 : logs.front().total_cost();
  for (const auto& log : logs) rep.iterations.push_back(summarize(log, base));
  write_fuel_series_csv(fuel, rep);

  auto dump = [&](const char* file, const std::ostringstream& s) {
    std::ofstream f(out / file, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + (out / file).string() + "'");
    f << s.str();
  };
  dump("velocity_vs_position.csv", vel);
  dump("force_vs_position.csv", force);
  dump("fuel_vs_iteration.csv", fuel);
}

}  // namespace pcc
