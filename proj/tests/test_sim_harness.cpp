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

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "pcc_lmpc/sim_harness.hpp"

namespace pcc {
namespace {

CampaignConfig short_flat() {
  CampaignConfig cfg;
  cfg.route_file = "flat_50m";
  cfg.vehicle.t_s = 0.2;
  cfg.controller.N = 30;
  cfg.controller.N_f = 75;
  cfg.controller.lookahead_m = 50.0;
  cfg.baseline.v_ref = 5.0;
  cfg.iterations = 2;
  return cfg;
}

TEST(Baseline, TracksReferenceAndStopsAtGoal) {
  const CampaignConfig cfg = short_flat();
  ObservationStore store;
  const RouteProfile route = routes::flat(50.0);
  const Controller c = [&](const VehicleState& x, int t, StepDiagnostics&) {
    return baseline_controller(x, t, 5.0, 50.0, cfg.vehicle);
  };
  const IterationLog log = run_iteration(c, route, cfg.vehicle, cfg.fuel, 75, 0, store);
  EXPECT_LE(log.arrival_step, 75);
  EXPECT_TRUE(is_arrived(log.x[log.arrival_step], 50.0, {}));
  double vmax = 0.0;
  for (const auto& x : log.x) vmax = std::max(vmax, x.v);
  EXPECT_LT(vmax, 5.0 * 1.15);  // the force lag makes the P tracker overshoot
  EXPECT_GT(vmax, 4.5);
  // every moving step fed the estimator
  EXPECT_GT(store.size(), static_cast<std::size_t>(log.arrival_step / 2));
}

TEST(RunIteration, LateTripThrows) {
  const CampaignConfig cfg = short_flat();
  ObservationStore store;
  const Controller idle = [](const VehicleState&, int, StepDiagnostics&) { return ControlInput{}; };
  EXPECT_THROW(run_iteration(idle, routes::flat(50.0), cfg.vehicle, cfg.fuel, 75, 0, store),
               IterationFailure);
}

TEST(Campaign, ValidatesBudgetAgainstBaseline) {
  CampaignConfig cfg = short_flat();
  cfg.baseline.v_ref = 2.0;  // 25 s for 50 m, budget 15 s
  EXPECT_THROW(cfg.validate(50.0), std::invalid_argument);
  cfg = short_flat();
  cfg.controller.N = 76;
  EXPECT_THROW(cfg.validate(50.0), std::invalid_argument);
}

class ShortCampaign : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { result = new CampaignResult(run_campaign(short_flat(), routes::flat(50.0))); }
  static void TearDownTestSuite() { delete result; }
  static CampaignResult* result;
};
CampaignResult* ShortCampaign::result = nullptr;

TEST_F(ShortCampaign, EveryIterationArrivesInBudget) {
  ASSERT_EQ(result->logs.size(), 3u);
  for (const auto& log : result->logs) {
    EXPECT_LE(log.arrival_step, 75);
    EXPECT_EQ(log.steps(), 76);
    if (log.arrival_step < 75) {
      EXPECT_EQ(log.x.back(), goal_state(50.0));
    }
  }
  EXPECT_EQ(result->report.iterations.front().normalized_fuel, 1.0);
  EXPECT_EQ(result->report.N, 30);
  EXPECT_EQ(result->report.N_f, 75);
}

TEST_F(ShortCampaign, LearningImprovesOnBaseline) {
  EXPECT_LT(result->report.iterations.back().normalized_fuel, 1.0);
}

TEST_F(ShortCampaign, SummaryMatchesLog) {
  const IterationLog& log = result->logs[1];
  const IterationSummary s = summarize(log, result->logs[0].total_cost());
  EXPECT_EQ(s.iteration, 1);
  EXPECT_EQ(s.trajectory_file, "iter_01.csv");
  EXPECT_EQ(s.arrival_step, log.arrival_step);
  EXPECT_NEAR(s.normalized_fuel, log.total_cost() / result->logs[0].total_cost(), 1e-15);
  int fb = 0;
  for (int k = 0; k < log.arrival_step; ++k) fb += log.diag[k].fallback ? 1 : 0;
  EXPECT_EQ(s.fallback_steps, fb);
}

TEST_F(ShortCampaign, CsvRoundTripKeepsArrivalAndData) {
  for (const auto& log : result->logs) {
    std::stringstream buf;
    write_iteration_csv(buf, log);
    const IterationLog back = read_iteration_csv(buf);
    EXPECT_EQ(back.iteration, log.iteration);
    EXPECT_EQ(back.arrival_step, log.arrival_step);
    EXPECT_EQ(back.horizon, log.horizon);
    ASSERT_EQ(back.steps(), log.steps());
    for (int k = 0; k < log.steps(); ++k) {
      EXPECT_NEAR(back.x[k].s, log.x[k].s, 1e-9);
      EXPECT_NEAR(back.x[k].v, log.x[k].v, 1e-9);
      EXPECT_NEAR(back.x[k].F, log.x[k].F, 1e-7);
      EXPECT_EQ(back.diag[k].status, log.diag[k].status);
      EXPECT_EQ(back.diag[k].fallback, log.diag[k].fallback);
      EXPECT_EQ(std::isnan(back.theta_bar[k]), std::isnan(log.theta_bar[k]));
    }
    EXPECT_NEAR(back.total_cost(), log.total_cost(), 1e-9);
    // a second pass is byte-stable
    std::stringstream again;
    write_iteration_csv(again, back);
    EXPECT_EQ(again.str(), buf.str());
  }
}

TEST(LogCsv, RejectsCorruptInput) {
  std::istringstream none("");
  EXPECT_THROW(read_iteration_csv(none), LogParseError);
  std::istringstream header_only(std::string(kLogHeader) + "\n");
  EXPECT_THROW(read_iteration_csv(header_only), LogParseError);
  std::istringstream short_row(std::string(kLogHeader) + "\n0,0,0,0\n");
  EXPECT_THROW(read_iteration_csv(short_row), LogParseError);
  std::istringstream bad_status(std::string(kLogHeader) + "\n0,0,0,0,0,0,0,0,0,nan,weird,0\n");
  EXPECT_THROW(read_iteration_csv(bad_status), LogParseError);
  std::istringstream gap(std::string(kLogHeader) + "\n0,0,0,0,0,0,0,0,0,nan,none,0\n0,2,0,0,0,0,0,0,0,nan,none,0\n");
  EXPECT_THROW(read_iteration_csv(gap), LogParseError);
  std::istringstream bad_number(std::string(kLogHeader) + "\n0,0,1x,0,0,0,0,0,0,nan,none,0\n");
  EXPECT_THROW(read_iteration_csv(bad_number), LogParseError);
}

TEST(FuelSeries, OneRowPerIteration) {
  CampaignReport rep;
  rep.iterations.push_back({0, 10.0, 1.0, 70, 0, 0.0, "iter_00.csv"});
  rep.iterations.push_back({1, 9.5, 0.95, 72, 3, 2.5, "iter_01.csv"});
  std::ostringstream out;
  write_fuel_series_csv(out, rep);
  EXPECT_EQ(out.str(), std::string(kFuelSeriesHeader) + "\n0,10,1,70,0\n1,9.5,0.95,72,3\n");
}

TEST(Oracles, FullHorizonSolutionIsDynamicallyConsistent) {
  CampaignConfig cfg = short_flat();
  const RouteProfile route = routes::flat(50.0);
  const OracleResult orc = full_horizon_oracle(cfg, route, baseline_inputs(cfg, route));
  ASSERT_TRUE(orc.available());
  ASSERT_EQ(orc.x.size(), 76u);
  for (std::size_t k = 0; k < orc.u.size(); ++k) {
    const VehicleState next = model_step(orc.x[k], orc.u[k], 0.0, cfg.vehicle);
    EXPECT_NEAR(next.s, orc.x[k + 1].s, 1e-6);
    EXPECT_NEAR(next.v, orc.x[k + 1].v, 1e-6);
    EXPECT_NEAR(next.F, orc.x[k + 1].F, 1e-3);
    EXPECT_TRUE(is_admissible(orc.u[k], cfg.vehicle));
  }
  EXPECT_NEAR(orc.x.back().s, 50.0, 1e-5);
  EXPECT_NEAR(orc.x.back().v, 0.0, 1e-6);

  ObservationStore store;
  const Controller base = [&](const VehicleState& x, int t, StepDiagnostics&) {
    return baseline_controller(x, t, 5.0, 50.0, cfg.vehicle);
  };
  EXPECT_LT(orc.objective, run_iteration(base, route, cfg.vehicle, cfg.fuel, 75, 0, store).total_cost());
}

TEST(Oracles, ZeroLengthRouteIsTrivial) {
  const OracleResult orc = full_horizon_oracle(short_flat(), routes::flat(0.0), {});
  EXPECT_TRUE(orc.available());
  EXPECT_EQ(orc.objective, 0.0);
}

class Flat200 : public ::testing::Test {
 protected:
  static CampaignConfig config() {
    CampaignConfig cfg;
    cfg.vehicle.t_s = 0.2;
    cfg.controller.N_f = 150;
    cfg.baseline.v_ref = 7.8;
    return cfg;
  }
};

TEST_F(Flat200, DpIsBoundedBelowByContinuousOracleMinusSlack) {
  const CampaignConfig cfg = config();
  const RouteProfile route = routes::flat(200.0);
  const OracleResult orc = full_horizon_oracle(cfg, route, baseline_inputs(cfg, route));
  ASSERT_TRUE(orc.available());
  DpGrid g;
  g.n_s = 26;
  g.n_v = 21;
  g.n_F = 11;
  g.v_max = 15.0;
  const DpResult dp = dp_oracle(cfg, route, g);
  ASSERT_TRUE(dp.available());
  EXPECT_GE(dp.objective, orc.objective - dp.slack);

  DpGrid fine = g;
  fine.n_s = 51;
  fine.n_v = 41;
  fine.n_F = 21;
  const DpResult dp2 = dp_oracle(cfg, route, fine);
  ASSERT_TRUE(dp2.available());
  EXPECT_LT(std::abs(dp2.objective - dp.objective), dp.slack);
}

TEST(Oracles, DpRejectsOversizedGrids) {
  CampaignConfig cfg = short_flat();
  DpGrid g;
  g.n_s = 200;
  g.n_v = 50;
  g.n_F = 11;
  EXPECT_THROW(dp_oracle(cfg, routes::flat(50.0), g), std::invalid_argument);
  g = DpGrid{};
  g.hold = 4;  // does not divide 75
  EXPECT_THROW(dp_oracle(cfg, routes::flat(50.0), g), std::invalid_argument);
}

}  // namespace
}  // namespace pcc
