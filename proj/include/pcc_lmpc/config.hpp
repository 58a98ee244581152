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

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pcc_lmpc/sim_harness.hpp"

namespace pcc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Json = nlohmann::ordered_json;

// Campaign configuration as JSON. Section names follow the modules.
inline Json config_to_json(const CampaignConfig& c) {
  const auto& v = c.vehicle;
  const auto& f = c.fuel;
  const auto& k = c.controller;
  const auto& o = c.controller.solver;
  Json j;
  j["route"] = {{"file", c.route_file}};
  j["vehicle"] = {{"m", v.m},         {"tau", v.tau},     {"t_s", v.t_s},     {"g", v.g},
                  {"c_r", v.c_r},     {"rho", v.rho},     {"A", v.A},         {"C_d", v.C_d},
                  {"v_max", v.v_max}, {"F_max", v.F_max}, {"F_min", v.F_min}};
  j["fuel"] = {{"b0", f.b0}, {"b1", f.b1}, {"b2", f.b2}, {"c0", f.c0}, {"c1", f.c1}, {"c2", f.c2}};
  j["arrival"] = {{"eps_s", c.arrival.eps_s}, {"eps_v", c.arrival.eps_v}, {"eps_F", c.arrival.eps_F}};
  j["grade_estimator"] = {{"memory_iterations", c.grade_memory}};
  j["controller"] = {{"N", k.N},
                     {"N_f", k.N_f},
                     {"lookahead_m", k.lookahead_m},
                     {"refit_every", k.refit_every},
                     {"lambda_reg", k.lambda_reg},
                     {"accept_violation", k.accept_violation},
                     {"fallback_kp", k.fallback_kp},
                     {"fallback_a_dec", k.fallback_a_dec}};
  j["solver"] = {{"trust_radius", o.trust_radius},
                 {"max_trust_radius", o.max_trust_radius},
                 {"penalty", o.penalty},
                 {"max_sqp_iterations", o.max_sqp_iterations},
                 {"step_tol", o.step_tol},
                 {"kkt_tol", o.kkt_tol},
                 {"feasibility_tol", o.feasibility_tol},
                 {"accept_ratio", o.accept_ratio},
                 {"regularization", o.regularization},
                 {"qp_tol", o.qp_tol}};
  j["oracle"] = {{"max_sqp_iterations", c.oracle_max_sqp_iterations}};
  j["baseline"] = {{"v_ref", c.baseline.v_ref}, {"kp", c.baseline.kp}, {"a_dec", c.baseline.a_dec}};
  j["campaign"] = {{"iterations", c.iterations}, {"seed", c.seed}, {"output_dir", c.output_dir}};
  return j;
}

namespace detail {

template <class T>
void read_field(const Json& j, const std::string& section, const std::string& key, T& out) {
  const Json& v = j.at(section).at(key);
  const std::string where = section + "." + key;
  if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(where + ": expected a string");
    out = v.get<std::string>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (v.get<long long>() < 0) throw ConfigError(where + ": must be nonnegative");
    }
    out = v.get<T>();
  } else {
    if (!v.is_number()) throw ConfigError(where + ": expected a number");
    out = v.get<T>();
  }
}

// Copies `user` onto `base`, refusing keys the schema does not know.
inline void merge_strict(Json& base, const Json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string where = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + where + "'");
    Json& slot = base[it.key()];
    if (slot.is_object()) {
      merge_strict(slot, it.value(), where);
    } else {
      if (it.value().is_object() || it.value().is_array()) {
        throw ConfigError(where + ": expected a scalar");
      }
      slot = it.value();
    }
  }
}

}  // namespace detail

// Throws ConfigError on unknown keys, wrong types or invalid values.
inline CampaignConfig config_from_json(const Json& user) {
  Json j = config_to_json(CampaignConfig{});
  detail::merge_strict(j, user, "");
  CampaignConfig c;
  try {
    using detail::read_field;
    read_field(j, "route", "file", c.route_file);
    auto& v = c.vehicle;
    read_field(j, "vehicle", "m", v.m);
    read_field(j, "vehicle", "tau", v.tau);
    read_field(j, "vehicle", "t_s", v.t_s);
    read_field(j, "vehicle", "g", v.g);
    read_field(j, "vehicle", "c_r", v.c_r);
    read_field(j, "vehicle", "rho", v.rho);
    read_field(j, "vehicle", "A", v.A);
    read_field(j, "vehicle", "C_d", v.C_d);
    read_field(j, "vehicle", "v_max", v.v_max);
    read_field(j, "vehicle", "F_max", v.F_max);
    read_field(j, "vehicle", "F_min", v.F_min);
    auto& f = c.fuel;
    read_field(j, "fuel", "b0", f.b0);
    read_field(j, "fuel", "b1", f.b1);
    read_field(j, "fuel", "b2", f.b2);
    read_field(j, "fuel", "c0", f.c0);
    read_field(j, "fuel", "c1", f.c1);
    read_field(j, "fuel", "c2", f.c2);
    read_field(j, "arrival", "eps_s", c.arrival.eps_s);
    read_field(j, "arrival", "eps_v", c.arrival.eps_v);
    read_field(j, "arrival", "eps_F", c.arrival.eps_F);
    read_field(j, "grade_estimator", "memory_iterations", c.grade_memory);
    auto& k = c.controller;
    read_field(j, "controller", "N", k.N);
    read_field(j, "controller", "N_f", k.N_f);
    read_field(j, "controller", "lookahead_m", k.lookahead_m);
    read_field(j, "controller", "refit_every", k.refit_every);
    read_field(j, "controller", "lambda_reg", k.lambda_reg);
    read_field(j, "controller", "accept_violation", k.accept_violation);
    read_field(j, "controller", "fallback_kp", k.fallback_kp);
    read_field(j, "controller", "fallback_a_dec", k.fallback_a_dec);
    auto& o = k.solver;
    read_field(j, "solver", "trust_radius", o.trust_radius);
    read_field(j, "solver", "max_trust_radius", o.max_trust_radius);
    read_field(j, "solver", "penalty", o.penalty);
    read_field(j, "solver", "max_sqp_iterations", o.max_sqp_iterations);
    read_field(j, "solver", "step_tol", o.step_tol);
    read_field(j, "solver", "kkt_tol", o.kkt_tol);
    read_field(j, "solver", "feasibility_tol", o.feasibility_tol);
    read_field(j, "solver", "accept_ratio", o.accept_ratio);
    read_field(j, "solver", "regularization", o.regularization);
    read_field(j, "solver", "qp_tol", o.qp_tol);
    read_field(j, "oracle", "max_sqp_iterations", c.oracle_max_sqp_iterations);
    read_field(j, "baseline", "v_ref", c.baseline.v_ref);
    read_field(j, "baseline", "kp", c.baseline.kp);
    read_field(j, "baseline", "a_dec", c.baseline.a_dec);
    read_field(j, "campaign", "iterations", c.iterations);
    read_field(j, "campaign", "seed", c.seed);
    read_field(j, "campaign", "output_dir", c.output_dir);
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  // Route-independent checks; the time-budget gate needs the route.
  try {
    c.vehicle.validate();
    c.fuel.validate();
    if (c.iterations < 1) throw std::invalid_argument("campaign.iterations must be >= 1");
    if (c.grade_memory < 1) throw std::invalid_argument("grade_estimator.memory_iterations must be >= 1");
    if (!(c.baseline.v_ref > 0.0)) throw std::invalid_argument("baseline.v_ref must be positive");
    if (!(c.baseline.kp > 0.0) || !(c.baseline.a_dec > 0.0)) {
      throw std::invalid_argument("baseline.kp and baseline.a_dec must be positive");
    }
    ControllerConfig probe = c.controller_for(0.0);
    probe.validate();
    if (c.controller.solver.max_sqp_iterations < 1 || c.oracle_max_sqp_iterations < 1) {
      throw std::invalid_argument("solver.max_sqp_iterations and oracle.max_sqp_iterations must be >= 1");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

inline CampaignConfig parse_config(const std::string& text, const std::string& source = "<config>") {
  Json j;
  try {
    j = Json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const Json::parse_error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return config_from_json(j);
}

inline std::string serialize_config(const CampaignConfig& c) { return config_to_json(c).dump(2) + "\n"; }

// "a.b=value". The value is read as a JSON literal when it parses as one and
// as a bare string otherwise, so controller.N=5 and route.file=x.csv both work.
inline void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  std::vector<std::string> parts;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
  const Json schema = config_to_json(CampaignConfig{});
  const Json* known = &schema;
  Json* slot = &j;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (!known->is_object() || !known->contains(parts[i])) {
      throw ConfigError("unknown config key '" + key + "'");
    }
    known = &(*known)[parts[i]];
    if (!slot->is_object()) *slot = Json::object();
    slot = &(*slot)[parts[i]];
  }
  if (known->is_object()) throw ConfigError("override '" + key + "' names a section, not a value");
  *slot = value;
}

inline CampaignConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  Json j;
  try {
    j = Json::parse(buf.str(), nullptr, true, true);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": top level must be an object");
  for (const auto& o : overrides) apply_override(j, o);
  CampaignConfig c = config_from_json(j);
  // Relative route paths are taken from the config file's directory.
  if (!c.route_file.empty()) {
    std::filesystem::path rp(c.route_file);
    if (rp.is_relative()) {
      c.route_file = (std::filesystem::path(path).parent_path() / rp).lexically_normal().string();
    }
  }
  return c;
}

}  // namespace pcc
