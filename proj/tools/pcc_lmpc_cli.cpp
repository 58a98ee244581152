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

// pcc_lmpc_cli: run campaigns and oracles, regenerate report tables.
//
// Exit codes: 0 ok, 1 bad config or input, 2 an iteration missed the time
// budget, 3 the oracle found no feasible trajectory.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "pcc_lmpc/config.hpp"
#include "pcc_lmpc/report.hpp"
#include "pcc_lmpc/sim_harness.hpp"

namespace fs = std::filesystem;
using namespace pcc;

namespace {

enum Exit { kOk = 0, kInputError = 1, kIterationFailure = 2, kOracleInfeasible = 3 };

struct Options {
  std::string config;
  std::string out;
  std::vector<std::string> overrides;
  int iterations{0};
  bool quiet{false};
  std::string dir;    // report input
  std::string route;  // validate-route input
};

CampaignConfig effective_config(const Options& o) {
  CampaignConfig cfg = load_config(o.config, o.overrides);
  if (o.iterations > 0) cfg.iterations = o.iterations;
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (cfg.route_file.empty()) throw ConfigError("route.file is not set");
  return cfg;
}

RouteProfile load_route(const std::string& path) {
  if (!fs::exists(path)) throw ConfigError("route file '" + path + "' does not exist");
  try {
    return RouteProfile::load_csv(path);
  } catch (const RouteParseError& e) {
    throw ConfigError(e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

int cmd_run(const Options& o) {
  const CampaignConfig cfg = effective_config(o);
  const RouteProfile route = load_route(cfg.route_file);
  try {
    cfg.validate(route.length());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);
  write_file(out / "config.json", serialize_config(cfg));

  CampaignResult res;
  try {
    res = run_campaign(cfg, route, [&](const IterationSummary& s) {
      if (o.quiet) return;
      std::cout << "iteration " << s.iteration << ": fuel " << s.total_fuel << " (normalized "
                << s.normalized_fuel << "), arrival step " << s.arrival_step << ", fallback steps "
                << s.fallback_steps << std::endl;
    });
  } catch (const IterationFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIterationFailure;
  }
  // Tables are built from the logs as written, so `report` on this directory
  // reproduces them byte for byte.
  std::vector<IterationLog> written;
  for (std::size_t i = 0; i < res.logs.size(); ++i) {
    std::ostringstream csv;
    write_iteration_csv(csv, res.logs[i]);
    const std::string file = res.report.iterations[i].trajectory_file;
    write_file(out / file, csv.str());
    std::istringstream back(csv.str());
    written.push_back(read_iteration_csv(back, file));
  }
  write_file(out / "summary.json", summary_json(res.report, cfg).dump(2) + "\n");
  write_report_products(written, out);
  if (!o.quiet) std::cout << "wrote " << res.logs.size() << " iteration logs to " << out.string() << '\n';
  return kOk;
}

int cmd_oracle(const Options& o) {
  const CampaignConfig cfg = effective_config(o);
  const RouteProfile route = load_route(cfg.route_file);
  try {
    cfg.validate(route.length());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const fs::path out(cfg.output_dir);
  fs::create_directories(out);
  std::vector<ControlInput> warm;
  try {
    warm = baseline_inputs(cfg, route);
  } catch (const IterationFailure& e) {
    std::cerr << "error: baseline warm start failed: " << e.what() << '\n';
    return kIterationFailure;
  }
  const OracleResult orc = full_horizon_oracle(cfg, route, warm);
  write_file(out / "oracle.csv", oracle_csv(orc, cfg.fuel));
  write_file(out / "oracle.json", oracle_json(orc).dump(2) + "\n");
  if (!orc.available()) {
    std::cerr << "error: oracle unavailable (" << to_string(orc.status) << ", violation "
              << orc.max_violation << ")\n";
    return kOracleInfeasible;
  }
  if (!o.quiet) std::cout << "oracle objective " << orc.objective << " after " << orc.iterations << " iterations\n";
  return kOk;
}

int cmd_report(const Options& o) {
  const fs::path dir(o.dir);
  if (!fs::is_directory(dir)) throw ConfigError("'" + o.dir + "' is not a directory");
  const std::vector<IterationLog> logs = read_campaign_logs(dir);
  const fs::path out = o.out.empty() ? dir : fs::path(o.out);
  fs::create_directories(out);
  write_report_products(logs, out);
  if (!o.quiet) std::cout << "report for " << logs.size() << " iterations written to " << out.string() << '\n';
  return kOk;
}

int cmd_validate_route(const Options& o) {
  const RouteProfile route = load_route(o.route);
  double peak = 0.0;
  for (const auto& r : route.samples()) peak = std::max(peak, std::abs(r.theta));
  if (!o.quiet) {
    std::cout << o.route << ": " << route.samples().size() << " samples, length " << route.length()
              << " m, max |grade| " << peak << " rad\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learning MPC for predictive cruise control under a trip time budget"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", o.config, "campaign config (JSON)");
    if (needs_config) c->required();
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--set", o.overrides, "override, e.g. controller.N=30 (repeatable)");
    sub->add_flag("--quiet", o.quiet, "suppress progress output");
  };

  auto* run = app.add_subcommand("run", "run a campaign: baseline trip, then LMPC iterations");
  add_common(run, true);
  run->add_option("--iterations", o.iterations, "number of LMPC iterations")->check(CLI::PositiveNumber);

  auto* oracle = app.add_subcommand("oracle", "solve the whole trip as one problem");
  add_common(oracle, true);

  auto* report = app.add_subcommand("report", "regenerate report tables from campaign logs");
  report->add_option("dir", o.dir, "campaign output directory")->required();
  report->add_option("--out", o.out, "where to write the tables (default: the log directory)");
  report->add_flag("--quiet", o.quiet, "suppress progress output");

  auto* validate = app.add_subcommand("validate-route", "check a route grade table");
  validate->add_option("route", o.route, "route CSV (s_m,grade_rad)")->required();
  validate->add_flag("--quiet", o.quiet, "suppress progress output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInputError;
  }

  try {
    if (run->parsed()) return cmd_run(o);
    if (oracle->parsed()) return cmd_oracle(o);
    if (report->parsed()) return cmd_report(o);
    if (validate->parsed()) return cmd_validate_route(o);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const LogParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kInputError;
  }
  return kInputError;
}
