#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lago/diagnostics.hpp"
#include "lago/errors.hpp"
#include "lago/io.hpp"
#include "lago/optimizer.hpp"
#include "lago/power.hpp"
#include "lago/sim.hpp"
#include "lago/trial.hpp"

using namespace lago;

namespace {

Vec parse_vec(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      std::size_t pos = 0;
      v.push_back(std::stod(cell, &pos));
      if (pos != cell.size()) throw std::invalid_argument(cell);
    } catch (const std::exception&) {
      throw ValidationError("bad number '" + cell + "' in '" + s + "'");
    }
  }
  if (v.empty()) throw ValidationError("empty vector '" + s + "'");
  return Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Goal overrides shared by the trial subcommands.
struct GoalFlags {
  std::optional<double> goal, power_goal;
  std::string approach, test, scale, direction;
  bool no_outcome_goal = false;

  void add(CLI::App* cmd) {
    cmd->add_option("--goal", goal, "outcome goal p~");
    cmd->add_option("--power-goal", power_goal, "power goal Pi");
    cmd->add_flag("--no-outcome-goal", no_outcome_goal, "drop the configured outcome goal");
    cmd->add_option("--approach", approach, "unconditional | conditional");
    cmd->add_option("--test", test, "final test kind");
    cmd->add_option("--scale", scale, "conditional scaling: sd | variance");
    cmd->add_option("--direction", direction, "increase | decrease");
  }

  void apply(GoalSpec& g) const {
    if (no_outcome_goal) g.outcome_goal.reset();
    if (goal) g.outcome_goal = *goal;
    if (power_goal) g.power_goal = *power_goal;
    if (!approach.empty()) g.approach = approach_from_string(approach);
    if (!test.empty()) g.test = test_from_string(test);
    if (!scale.empty()) g.conditional_scale = conditional_scale_from_string(scale);
    if (!direction.empty()) g.direction = direction_from_string(direction);
  }
};

struct TrialInputs {
  json raw;
  TrialConfig cfg;
  std::vector<StageRecord> stages;  // empty when the config carries a summary
};

TrialInputs load_trial(const std::string& config, const std::string& data, const GoalFlags& flags) {
  TrialInputs in;
  in.raw = read_json_file(config);
  in.cfg = config_from_json(in.raw);
  flags.apply(in.cfg.goals);
  in.cfg.validate();
  if (!data.empty()) in.stages = read_stage_csv_file(data, in.cfg.P());
  return in;
}

// Fitted model and projection for the next stage, from per-subject data or
// from the config's coefficients plus observed arm totals.
std::pair<FittedModel, Projection> model_and_projection(const TrialInputs& in) {
  const auto& cfg = in.cfg;
  if (!in.stages.empty()) {
    TrialState st = start_trial(cfg);
    for (const auto& s : in.stages) st = ingest_stage(st, s);
    if (st.status != TrialStatus::awaiting) throw ValidationError("data already covers every stage");
    std::vector<PlannedCenter> future;
    for (int l = static_cast<int>(st.completed.size()); l < cfg.K(); ++l)
      future.insert(future.end(), cfg.stages[l].begin(), cfg.stages[l].end());
    return {fit_completed(st), make_projection(pooled_centers(st.completed), future)};
  }
  if (!cfg.beta) throw ValidationError("need --data or a config with beta and observed_summary");
  if (!in.raw.contains("observed_summary")) throw ValidationError("config lacks observed_summary; pass --data");
  return {model_from_beta(*cfg.beta, cfg.link), summary_projection(cfg, observed_summary_from_json(in.raw["observed_summary"]))};
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

int run_recommend(const std::string& config, const std::string& data, const GoalFlags& flags, bool integer) {
  TrialInputs in = load_trial(config, data, flags);
  const auto& cfg = in.cfg;
  Recommendation rec;
  FittedModel model;
  if (!in.stages.empty()) {
    TrialState st = start_trial(cfg);
    for (const auto& s : in.stages) st = ingest_stage(st, s);
    rec = next_recommendation(st);
    model = fit_completed(st);
  } else {
    auto [m, pr] = model_and_projection(in);
    model = m;
    rec = recommend(model, pr, cfg.goals, cfg.cost, cfg.bounds, cfg.stage1_x);
  }
  json out = to_json(rec, cfg.components);
  if (integer) {
    Vec xi = integerize(model, cfg.bounds, rec.x_hat, cfg.goals.direction);
    out["integerized"] = {{"x", to_json(xi)}, {"outcome", predict(model, xi)}, {"cost", cfg.cost.evaluate(xi)}};
  }
  print_json(out);
  return 0;
}

int run_power(const std::string& config, const std::string& data, const GoalFlags& flags, const std::string& xs) {
  TrialInputs in = load_trial(config, data, flags);
  const auto& g = in.cfg.goals;
  auto [model, pr] = model_and_projection(in);
  Vec x = parse_vec(xs);
  if (x.size() != in.cfg.P()) throw ValidationError("--x has the wrong length");
  LambdaResult lr = unconditional_lambda(x, model, pr, g.test, g.direction);
  const double df = is_wald(g.test) ? static_cast<double>(in.cfg.P()) : 1.0;
  json out{{"x", to_json(x)},
           {"outcome", predict(model, x)},
           {"lambda", lr.lambda},
           {"crit_scale", lr.crit_scale},
           {"drift", lr.drift},
           {"unconditional_power", unconditional_power(lr, g.alpha, df)}};
  if (!is_wald(g.test)) {
    const double pi = g.power_goal.value_or(0.8);
    out["conditional_slack"] =
        conditional_constraint_slack(x, model, pr, g.test, g.alpha, pi, g.direction, g.conditional_scale);
    out["conditional_slack_pi"] = pi;
    out["conditional_power"] = conditional_power_at(predict(model, x), model, pr, g.test, g.alpha, g.direction);
  }
  print_json(out);
  return 0;
}

int run_plan_stage1(const std::string& config, const GoalFlags& flags) {
  json raw = read_json_file(config);
  TrialConfig cfg = config_from_json(raw);
  flags.apply(cfg.goals);
  cfg.validate();
  if (!cfg.beta) throw ValidationError("plan-stage1 needs pre-trial coefficients in 'beta'");
  std::vector<PlannedCenter> planned;
  for (const auto& st : cfg.stages) planned.insert(planned.end(), st.begin(), st.end());
  Recommendation rec =
      plan_stage1(model_from_beta(*cfg.beta, cfg.link), cfg.goals, cfg.cost, cfg.bounds, planned, cfg.assumed_variance);
  print_json(to_json(rec, cfg.components));
  return 0;
}

int run_final_test(const std::string& config, const std::string& data, const std::string& counts,
                   const std::string& test_name, double alpha) {
  TestKind test = TestKind::z_unpooled;
  Link link = Link::logit();
  std::vector<Center> centers;
  if (!config.empty()) {
    json raw = read_json_file(config);
    TrialConfig cfg = config_from_json(raw);
    test = cfg.goals.test;
    link = cfg.link;
    if (!data.empty()) {
      for (const auto& s : read_stage_csv_file(data, cfg.P()))
        centers.insert(centers.end(), s.centers.begin(), s.centers.end());
    } else if (counts.empty() && raw.contains("all_stage_counts")) {
      ArmSummary a = observed_summary_from_json(raw["all_stage_counts"]);
      centers.push_back(Center::binary(Arm::intervention, Vec::Zero(cfg.P()), static_cast<int>(a.n1_obs),
                                       static_cast<int>(a.s1_obs)));
      centers.push_back(Center::binary(Arm::control, Vec::Zero(cfg.P()), static_cast<int>(a.n0_obs),
                                       static_cast<int>(a.s0_obs)));
    }
  }
  if (!counts.empty()) {
    Vec c = parse_vec(counts);
    if (c.size() != 4) throw ValidationError("--counts takes n1,s1,n0,s0");
    centers = {Center::binary(Arm::intervention, Vec::Zero(1), static_cast<int>(c(0)), static_cast<int>(c(1))),
               Center::binary(Arm::control, Vec::Zero(1), static_cast<int>(c(2)), static_cast<int>(c(3)))};
  }
  if (centers.empty()) throw ValidationError("final-test needs --data, --counts or a config with all_stage_counts");
  if (!test_name.empty()) test = test_from_string(test_name);
  if (is_wald(test) && !counts.empty()) throw ValidationError("Wald tests need per-center data");
  FinalTestResult r = final_test(centers, test, alpha, link);
  print_json({{"test", to_string(test)},
              {"statistic", r.statistic},
              {"df", r.df},
              {"p_value", r.p_value},
              {"reject", r.reject},
              {"alpha", alpha}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lago: adaptive multi-stage trial engine"};
  app.require_subcommand(1);

  GoalFlags flags;
  std::string config, data, xs, counts, test_name, scenario, scenario_file;
  bool integer = false;

  auto* rec = app.add_subcommand("recommend", "next-stage package from stage data and a trial config");
  rec->add_option("--config", config, "trial config JSON")->required();
  rec->add_option("--data", data, "per-subject stage CSV");
  rec->add_flag("--integerize", integer, "also report an integer package");
  flags.add(rec);

  auto* pw = app.add_subcommand("power", "projected unconditional lambda and conditional slack at a package");
  pw->add_option("--config", config, "trial config JSON")->required();
  pw->add_option("--data", data, "per-subject stage CSV");
  pw->add_option("--x", xs, "candidate package, comma separated")->required();
  flags.add(pw);

  auto* plan = app.add_subcommand("plan-stage1", "stage-1 package from pre-trial coefficients");
  plan->add_option("--config", config, "trial config JSON with beta")->required();
  flags.add(plan);

  int n = 40, reps = -1, threads = 0;
  std::optional<std::uint64_t> seed;
  std::optional<double> sim_power_goal;
  std::string sim_approach;
  bool emit = false, baseline = false, sandwich = false, as_json = false, no_goal = false;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo operating characteristics");
  sim->add_option("--scenario", scenario, "built-in scenario: 1a, 1b, 2a, 2b");
  sim->add_option("--config", scenario_file, "scenario JSON");
  sim->add_option("--n", n, "subjects per center (built-in scenarios)");
  sim->add_option("--power-goal", sim_power_goal, "power goal Pi");
  sim->add_flag("--no-power-goal", no_goal, "outcome goal only");
  sim->add_option("--approach", sim_approach, "unconditional | conditional");
  sim->add_option("--reps", reps, "replicates");
  sim->add_option("--seed", seed, "RNG seed")->required();
  sim->add_option("--threads", threads, "worker threads (default LAGO_THREADS or all cores)");
  sim->add_flag("--baseline", baseline, "repeat stage-1 packages instead of adapting");
  sim->add_flag("--sandwich", sandwich, "robust standard errors");
  sim->add_flag("--emit-config", emit, "print the resolved scenario JSON and exit");
  sim->add_flag("--json", as_json, "JSON report instead of CSV");

  double alpha = 0.05, pi = 0.8;
  int int_centers = 2;
  std::string beta_s = "0.1,0.3,0.15", approach_s = "unconditional";
  auto* dom = app.add_subcommand("dominance-threshold", "outcome goal above which the power goal never binds");
  dom->add_option("--n", n, "subjects per center");
  dom->add_option("--pi", pi, "power goal");
  dom->add_option("--alpha", alpha, "test level");
  dom->add_option("--approach", approach_s, "unconditional | conditional");
  dom->add_option("--beta", beta_s, "true coefficients b0,b11,b12");
  dom->add_option("--stage2-intervention", int_centers, "intervention centers among the 4 of stage 2");

  PerturbationOptions popt;
  std::optional<double> verify_goal;
  auto* ver = app.add_subcommand("verify-assumption7", "stability of the min-cost solution under perturbed beta");
  ver->add_option("--config", config, "trial config JSON")->required();
  ver->add_option("--data", data, "per-subject stage CSV; otherwise the config beta");
  ver->add_option("--goal", verify_goal, "outcome goal (default: config)");
  ver->add_option("--epsilon", popt.epsilon, "ball radius");
  ver->add_option("--samples", popt.samples, "draws per center (L)");
  ver->add_option("--eta", popt.eta, "tolerance on delta max");
  ver->add_option("--seed", popt.seed, "RNG seed");
  ver->add_flag("--extended", popt.extended, "also sample around a grid inside the 95% intervals");
  ver->add_option("--grid", popt.grid, "grid points (M)");

  auto* fin = app.add_subcommand("final-test", "end-of-trial hypothesis test on pooled data");
  fin->add_option("--config", config, "trial config JSON");
  fin->add_option("--data", data, "per-subject stage CSV");
  fin->add_option("--counts", counts, "n1,s1,n0,s0 for the 1-df binary tests");
  fin->add_option("--test", test_name, "test kind");
  fin->add_option("--alpha", alpha, "test level");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*rec) return run_recommend(config, data, flags, integer);
    if (*pw) return run_power(config, data, flags, xs);
    if (*plan) return run_plan_stage1(config, flags);
    if (*sim) {
      ScenarioSpec spec;
      if (!scenario_file.empty()) spec = scenario_from_json(read_json_file(scenario_file));
      else if (!scenario.empty()) spec = scenario_preset(scenario, n);
      else throw ValidationError("simulate needs --scenario or --config");
      spec.seed = *seed;
      if (reps > 0) spec.replicates = reps;
      if (sim_power_goal) spec.goals.power_goal = *sim_power_goal;
      if (no_goal) spec.goals.power_goal.reset();
      if (!sim_approach.empty()) spec.goals.approach = approach_from_string(sim_approach);
      if (baseline) spec.baseline = true;
      if (sandwich) spec.se = SeKind::sandwich;
      spec.validate();
      if (emit) {
        print_json(to_json(spec));
        return 0;
      }
      MetricsReport m = run_scenario(spec, threads);
      if (as_json) print_json(to_json(m));
      else std::cout << metrics_csv_header(static_cast<int>(spec.bounds.size())) << "\n" << metrics_csv_row(m) << "\n";
      return 0;
    }
    if (*dom) {
      DominanceDesign d = scenario_dominance_design(n, int_centers);
      double t = dominance_threshold(d, parse_vec(beta_s), alpha, pi, approach_from_string(approach_s));
      const double c0 = expit(parse_vec(beta_s)(0));
      print_json({{"n", n}, {"pi", pi}, {"approach", approach_s}, {"relative_percent", t},
                  {"outcome_goal", c0 * (1 + t / 100.0)}, {"control", c0}});
      return 0;
    }
    if (*ver) {
      TrialInputs in = load_trial(config, data, GoalFlags{});
      FittedModel model;
      if (!in.stages.empty()) {
        TrialState st = start_trial(in.cfg);
        for (const auto& s : in.stages) st = ingest_stage(st, s);
        model = fit_completed(st);
      } else if (in.cfg.beta) {
        model = model_from_beta(*in.cfg.beta, in.cfg.link);
      } else {
        throw ValidationError("verify-assumption7 needs --data or a config beta");
      }
      double goal = verify_goal ? *verify_goal
                                : (in.cfg.goals.outcome_goal ? *in.cfg.goals.outcome_goal
                                                             : throw ValidationError("no outcome goal"));
      PerturbationReport r = verify_assumption7(model, in.cfg.cost, in.cfg.bounds, goal, in.cfg.goals.direction, popt);
      json fails = json::array();
      for (const auto& f : r.failures) fails.push_back({{"center", f.center}, {"sample", f.sample}, {"message", f.message}});
      json centers = json::array();
      for (std::size_t m = 0; m < r.centers.size(); ++m)
        centers.push_back({{"beta", to_json(r.centers[m])},
                           {"x", r.solutions[m].size() ? to_json(r.solutions[m]) : json(nullptr)},
                           {"delta_max", std::isfinite(r.delta_max[m]) ? json(r.delta_max[m]) : json(nullptr)}});
      print_json({{"norm", r.norm}, {"seed", r.seed}, {"epsilon", r.epsilon}, {"eta", r.eta},
                  {"samples", r.samples}, {"delta_max", r.overall_delta_max}, {"pass", r.pass},
                  {"centers", centers}, {"failures", fails}});
      std::cerr << (r.pass ? "pass" : "fail") << ": delta_max " << r.overall_delta_max << " vs eta " << r.eta << "\n";
      return 0;
    }
    if (*fin) return run_final_test(config, data, counts, test_name, alpha);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    std::cerr << "error: bad JSON: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
