#include <sstream>

#include "doctest.h"
#include "lago/errors.hpp"
#include "lago/io.hpp"
#include "lago/trial.hpp"

using namespace lago;

namespace {

json small_config() {
  return json::parse(R"({
    "version": 1,
    "outcome": "binary",
    "components": ["visits", "days"],
    "bounds": {"lower": [0, 0], "upper": [2, 8]},
    "cost": [{"component": "visits", "degree": 1, "coeff": 10},
             {"component": "visits", "degree": 3, "coeff": 2},
             {"component": "days", "degree": 1, "coeff": 2},
             {"component": 0, "degree": 0, "coeff": 10}],
    "goals": {"outcome_goal": 0.7, "power_goal": 0.8, "approach": "conditional", "test": "z_unpooled"},
    "stages": [[{"arm": "control", "n": 40}, {"arm": "intervention", "n": 40, "count": 3}],
               [{"arm": "control", "n": 40, "count": 2}, {"arm": "intervention", "n": 40, "count": 2}]],
    "stage1_x": [1, 4]
  })");
}

StageRecord stage1_record() {
  StageRecord r;
  r.stage = 1;
  r.centers = {Center::binary(Arm::control, Eigen::Vector2d(0, 0), 40, 21),
               Center::binary(Arm::intervention, Eigen::Vector2d(1, 0), 40, 26),
               Center::binary(Arm::intervention, Eigen::Vector2d(0, 4), 40, 27),
               Center::binary(Arm::intervention, Eigen::Vector2d(1, 4), 40, 30)};
  return r;
}

}  // namespace

TEST_CASE("config parses counts, names and defaults") {
  TrialConfig cfg = config_from_json(small_config());
  CHECK(cfg.K() == 2);
  CHECK(cfg.stages[0].size() == 4);
  CHECK(cfg.stages[1].size() == 4);
  CHECK(cfg.cost.offset() == 10);
  CHECK(cfg.cost.coefficients()(0, 2) == 2);
  CHECK(cfg.goals.approach == Approach::conditional);
  CHECK(cfg.goals.outcome_goal == 0.7);
  CHECK(cfg.link.kind() == LinkKind::logit);
  CHECK_FALSE(cfg.beta.has_value());
}

TEST_CASE("config round-trips through JSON") {
  TrialConfig cfg = config_from_json(small_config());
  TrialConfig back = config_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
}

TEST_CASE("config errors are validation errors") {
  json j = small_config();
  j["version"] = 7;
  CHECK_THROWS_AS(config_from_json(j), ValidationError);
  j = small_config();
  j.erase("bounds");
  CHECK_THROWS_AS(config_from_json(j), ValidationError);
  j = small_config();
  j["cost"][0]["component"] = "nope";
  CHECK_THROWS_AS(config_from_json(j), ValidationError);
  j = small_config();
  j["goals"]["test"] = "chisq";
  CHECK_THROWS_AS(config_from_json(j), ValidationError);
  j = small_config();
  j["stages"][0][1]["count"] = 0;
  CHECK_THROWS_AS(config_from_json(j), ValidationError);
  j = small_config();
  j["bounds"]["upper"] = {2};
  CHECK_THROWS_AS(config_from_json(j), ValidationError);
}

TEST_CASE("stages must arrive in order") {
  TrialState st = start_trial(config_from_json(small_config()));
  StageRecord r2 = stage1_record();
  r2.stage = 2;
  CHECK_THROWS_AS(ingest_stage(st, r2), OutOfOrderStageError);
  st = ingest_stage(st, stage1_record());
  CHECK(st.next_stage() == 2);
  CHECK_THROWS_AS(ingest_stage(st, stage1_record()), OutOfOrderStageError);
  st = ingest_stage(st, r2);
  CHECK(st.status == TrialStatus::complete);
  r2.stage = 3;
  CHECK_THROWS_AS(ingest_stage(st, r2), OutOfOrderStageError);
}

TEST_CASE("ingest rejects malformed centers and warns on out-of-bounds packages") {
  TrialState st = start_trial(config_from_json(small_config()));
  StageRecord r = stage1_record();
  r.centers[1].sum = 41;
  CHECK_THROWS_AS(ingest_stage(st, r), ValidationError);
  r = stage1_record();
  r.centers[0].a = Eigen::Vector2d(1, 0);
  CHECK_THROWS_AS(ingest_stage(st, r), ValidationError);
  r = stage1_record();
  r.centers.erase(r.centers.begin());
  CHECK_THROWS_AS(ingest_stage(st, r), ValidationError);
  r = stage1_record();
  r.centers[3].a = Eigen::Vector2d(2.5, 4);
  TrialState next = ingest_stage(st, r);
  REQUIRE(next.warnings.size() == 1);
  CHECK(next.warnings[0].find("outside bounds") != std::string::npos);
  CHECK(st.completed.empty());
}

TEST_CASE("state round-trips and resumes to the same recommendation") {
  TrialState st = ingest_stage(start_trial(config_from_json(small_config())), stage1_record());
  Recommendation r = next_recommendation(st);
  st = with_recommendation(st, r);
  TrialState back = state_from_json(to_json(st));
  CHECK(to_json(back) == to_json(st));
  Recommendation r2 = next_recommendation(back);
  CHECK(r2.x_hat == r.x_hat);
  CHECK(r2.regime == r.regime);
  CHECK(r.futile.has_value());
}

TEST_CASE("observed summary feeds the same projection as per-center data") {
  TrialConfig cfg = config_from_json(small_config());
  ArmSummary obs = observed_summary_from_json(json{{"n1", 120}, {"s1", 83}, {"n0", 40}, {"s0", 21}});
  CHECK(obs.mean1_obs == doctest::Approx(83.0 / 120));
  CHECK(obs.var1_obs == doctest::Approx(83.0 / 120 * (1 - 83.0 / 120) * 120 / 119));
  Projection a = summary_projection(cfg, obs);
  CHECK(a.arms.n1_fut == 80);
  CHECK(a.arms.n0_fut == 80);
  Projection b = make_projection(stage1_record().centers, cfg.stages[1]);
  FittedModel m = model_from_beta(Eigen::Vector3d(0.1, 0.3, 0.15));
  for (double t : {0.6, 0.7, 0.8})
    CHECK(conditional_constraint_slack_at(t, m, a, TestKind::z_unpooled, 0.05, 0.8) ==
          doctest::Approx(conditional_constraint_slack_at(t, m, b, TestKind::z_unpooled, 0.05, 0.8)).epsilon(1e-12));
  CHECK_THROWS_AS(observed_summary_from_json(json{{"n1", 10}, {"s1", 11}, {"n0", 10}, {"s0", 1}}), ValidationError);
  CHECK_THROWS_AS(observed_summary_from_json(json{{"n1", 10}}), ValidationError);
}

TEST_CASE("csv reader groups rows and reports bad lines") {
  std::istringstream in(
      "stage,center,arm,x_1,x_2,y\n"
      "2,b,intervention,1,2,1\n"
      "1,a,control,0,0,0\n"
      "1,a,control,0,0,1\n"
      "1,c,1,1,0,1\n"
      "2,d,0,0,0,0\n");
  auto st = read_stage_csv(in, 2);
  REQUIRE(st.size() == 2);
  CHECK(st[0].stage == 1);
  CHECK(st[0].centers.size() == 2);
  CHECK(st[0].centers[0].n == 2);
  CHECK(st[0].centers[0].sum == 1);
  CHECK(st[0].centers[1].arm == Arm::intervention);
  CHECK(st[1].centers[0].a(1) == 2);

  std::istringstream missing("stage,center,arm,x_1,y\n1,a,control,0,1\n");
  CHECK_THROWS_AS(read_stage_csv(missing, 2), ValidationError);
  std::istringstream bad_num("stage,center,arm,x_1,x_2,y\n1,a,control,0,0,yes\n");
  CHECK_THROWS_AS(read_stage_csv(bad_num, 2), ValidationError);
  std::istringstream bad_stage("stage,center,arm,x_1,x_2,y\n0,a,control,0,0,1\n");
  CHECK_THROWS_AS(read_stage_csv(bad_stage, 2), ValidationError);
  std::istringstream moved("stage,center,arm,x_1,x_2,y\n1,a,control,0,0,1\n1,a,intervention,1,0,1\n");
  CHECK_THROWS_AS(read_stage_csv(moved, 2), ValidationError);
  std::istringstream short_row("stage,center,arm,x_1,x_2,y\n1,a,control,0,0\n");
  CHECK_THROWS_AS(read_stage_csv(short_row, 2), ValidationError);
  CHECK_THROWS_AS(read_stage_csv_file("/nonexistent/file.csv", 2), ValidationError);
}

TEST_CASE("final analysis on a completed trial") {
  TrialState st = ingest_stage(start_trial(config_from_json(small_config())), stage1_record());
  StageRecord r2;
  r2.stage = 2;
  r2.centers = {Center::binary(Arm::control, Eigen::Vector2d(0, 0), 40, 20),
                Center::binary(Arm::control, Eigen::Vector2d(0, 0), 40, 22),
                Center::binary(Arm::intervention, Eigen::Vector2d(0.5, 4), 40, 29),
                Center::binary(Arm::intervention, Eigen::Vector2d(0.5, 4), 40, 28)};
  st = ingest_stage(st, r2);
  auto res = final_analysis(st);
  ArmSummary a;
  a.n1_obs = 200;
  a.s1_obs = 140;
  a.n0_obs = 120;
  a.s0_obs = 63;
  CHECK(res.statistic == doctest::Approx(z_statistic(a, false)).epsilon(1e-14));
  auto opt = final_optimal(st);
  CHECK(opt.achieved_outcome == doctest::Approx(0.7).epsilon(1e-8));
}

TEST_CASE("BetterBirth example config loads") {
  TrialConfig cfg = config_from_json(read_json_file(LAGO_REPO_DATA "/betterbirth.json"));
  CHECK(cfg.goals.direction == Direction::decrease);
  CHECK(cfg.stages[1].size() == 30);
  CHECK(cfg.cost.evaluate(Eigen::Vector2d(27, 1)) == doctest::Approx(5543.8));
  CHECK_THROWS_AS(read_json_file("/nonexistent.json"), ValidationError);
}
