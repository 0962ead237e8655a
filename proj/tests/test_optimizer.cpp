#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "lago/distributions.hpp"
#include "lago/errors.hpp"
#include "lago/optimizer.hpp"

using namespace lago;

namespace {

Bounds box(Vec lo, Vec hi) {
  Bounds b;
  b.lower = std::move(lo);
  b.upper = std::move(hi);
  return b;
}

CostFunction scenario_cubic() {
  return CostFunction(2, {{0, 0, 10}, {0, 1, 10}, {0, 2, -1.19}, {0, 3, 2}, {1, 1, 2}, {1, 2, -0.2}, {1, 3, 0.1}});
}

FittedModel scenario_truth() { return model_from_beta(Eigen::Vector3d(0.1, 0.3, 0.15)); }

// Expected stage-1 data of the simulation layout with n per center, two
// control and two intervention centers still to come.
Projection scenario_projection(const FittedModel& m, int n) {
  const double a[4][2] = {{0, 0}, {1, 0}, {0, 4}, {1, 4}};
  std::vector<Center> obs;
  for (int j = 0; j < 4; ++j) {
    Center c;
    c.arm = j ? Arm::intervention : Arm::control;
    c.a = Eigen::Vector2d(a[j][0], a[j][1]);
    c.n = n;
    c.sum = c.sumsq = n * predict(m, c.a);
    obs.push_back(c);
  }
  return make_projection(obs, {{Arm::control, n}, {Arm::control, n}, {Arm::intervention, n}, {Arm::intervention, n}});
}

// LP oracle: the optimum over box and half-space sits at a vertex with at
// most one coordinate strictly inside its bounds.
double lp_vertex_min(const Vec& c, const Bounds& bd, const Vec& b, double h, Vec& arg) {
  const int P = static_cast<int>(c.size());
  double best = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < (1 << P); ++mask)
    for (int free = -1; free < P; ++free) {
      Vec x(P);
      for (int p = 0; p < P; ++p) x(p) = (mask >> p) & 1 ? bd.upper(p) : bd.lower(p);
      if (free >= 0) {
        if (b(free) == 0) continue;
        double rest = b.dot(x) - b(free) * x(free);
        x(free) = (h - rest) / b(free);
        if (x(free) < bd.lower(free) - 1e-12 || x(free) > bd.upper(free) + 1e-12) continue;
      }
      if (b.dot(x) < h - 1e-9) continue;
      double f = c.dot(x);
      if (f < best) best = f, arg = x;
    }
  return best;
}

}  // namespace

TEST_CASE("greedy linear allocation matches the vertex oracle") {
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> U(0, 1);
  int checked = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const int P = 2 + rep % 3;
    Vec c(P), b(P), lo(P), hi(P);
    for (int p = 0; p < P; ++p) {
      c(p) = 0.5 + 4.5 * U(rng);
      b(p) = (U(rng) < 0.2 ? -1 : 1) * (0.05 + U(rng));
      lo(p) = 2 * U(rng);
      hi(p) = lo(p) + 0.5 + 5 * U(rng);
    }
    Bounds bd = box(lo, hi);
    double top = 0, base = 0;
    for (int p = 0; p < P; ++p) {
      top += std::max(b(p) * lo(p), b(p) * hi(p));
      base += b(p) * lo(p);
    }
    double h = base + U(rng) * (top - base);
    Vec want;
    double fwant = lp_vertex_min(c, bd, b, h, want);
    Vec got = min_cost_linear(c, bd, b, h);
    CHECK(b.dot(got) >= h - 1e-9);
    CHECK(bd.contains(got));
    CHECK(c.dot(got) == doctest::Approx(fwant).epsilon(1e-10));
    CHECK((got - want).norm() <= 1e-9 * (1 + want.norm()));
    ++checked;
  }
  CHECK(checked == 100);
}

TEST_CASE("greedy throws when the half-space misses the box") {
  Bounds bd = box(Eigen::Vector2d(0, 0), Eigen::Vector2d(1, 1));
  CHECK_THROWS_AS(min_cost_linear(Eigen::Vector2d(1, 1), bd, Eigen::Vector2d(1, 1), 2.5), InfeasibleError);
  CHECK_THROWS_AS(min_cost_affine(CostFunction(2, {{0, 1, 1}}), bd, Eigen::Vector2d(1, 1), 2.5), InfeasibleError);
}

TEST_CASE("linear scenario optimum uses the first component only") {
  FittedModel m = scenario_truth();
  CostFunction c(2, {{0, 1, 1}, {1, 1, 4}});
  Bounds bd = box(Eigen::Vector2d(0, 0), Eigen::Vector2d(4, 8));
  Vec x = min_cost_subject_to_threshold(m, c, bd, 0.7455);
  CHECK(x(0) == doctest::Approx((logit(0.7455) - 0.1) / 0.3).epsilon(1e-12));
  CHECK(x(1) == 0.0);
  CHECK(x(0) == doctest::Approx(3.24918).epsilon(1e-5));
}

TEST_CASE("cubic scenario optimum satisfies the tangency condition") {
  FittedModel m = scenario_truth();
  CostFunction c = scenario_cubic();
  Bounds bd = box(Eigen::Vector2d(0, 0), Eigen::Vector2d(2, 8));
  Vec x = min_cost_subject_to_threshold(m, c, bd, 0.7);
  const double h = logit(0.7) - 0.1;
  CHECK(0.3 * x(0) + 0.15 * x(1) == doctest::Approx(h).epsilon(1e-10));
  CHECK(c.marginal_at(0, x(0)) / 0.3 == doctest::Approx(c.marginal_at(1, x(1)) / 0.15).epsilon(1e-6));
  CHECK(c.curvature_at(0, x(0)) > 0);
  // frozen
  CHECK(x(0) == doctest::Approx(0.50157).epsilon(1e-5));
  CHECK(x(1) == doctest::Approx(3.97885).epsilon(1e-5));
  CHECK(c.evaluate(x) == doctest::Approx(26.059).epsilon(1e-4));

  // brute force along the constraint surface
  double fmin = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= 200000; ++i) {
    double x1 = 2.0 * i / 200000, x2 = (h - 0.3 * x1) / 0.15;
    if (x2 < 0 || x2 > 8) continue;
    fmin = std::min(fmin, c.evaluate(Eigen::Vector2d(x1, x2)));
  }
  CHECK(c.evaluate(x) <= fmin + 1e-9);
}

TEST_CASE("minimum cost is nondecreasing in the threshold") {
  FittedModel m = scenario_truth();
  CostFunction c = scenario_cubic();
  Bounds bd = box(Eigen::Vector2d(0, 0), Eigen::Vector2d(2, 8));
  double prev = -1;
  for (double t = 0.56; t < p_max(m, bd); t += 0.01) {
    Vec x = min_cost_subject_to_threshold(m, c, bd, t);
    CHECK(bd.contains(x));
    CHECK(predict(m, x) >= t - 1e-9);
    double f = c.evaluate(x);
    CHECK(f >= prev - 1e-9);
    prev = f;
  }
  CHECK_THROWS_AS(min_cost_subject_to_threshold(m, c, bd, 0.9), InfeasibleError);
}

TEST_CASE("decrease goals flip the constraint") {
  FittedModel m = model_from_beta(Eigen::Vector3d(std::log(0.16), std::log(0.888) / 5, std::log(1.144)));
  CostFunction c(2, {{0, 1, 380}, {0, 2, -24}, {0, 3, 0.6}, {1, 1, 1700}, {1, 2, -950}, {1, 3, 220}});
  Bounds bd = box(Eigen::Vector2d(1, 1), Eigen::Vector2d(40, 5));
  double pm = p_max(m, bd, Direction::decrease);
  CHECK(pm == doctest::Approx(expit(m.beta(0) + 40 * m.beta(1) + m.beta(2))));
  Vec pkg = p_max_package(m, bd, Direction::decrease);
  CHECK(pkg(0) == 40);
  CHECK(pkg(1) == 1);
  Vec x = min_cost_subject_to_threshold(m, c, bd, 0.1, Direction::decrease);
  CHECK(predict(m, x) <= 0.1 + 1e-9);
  CHECK_THROWS_AS(min_cost_subject_to_threshold(m, c, bd, pm - 0.01, Direction::decrease), InfeasibleError);
}

TEST_CASE("power threshold is met at the result and missed just below") {
  FittedModel m = scenario_truth();
  CostFunction c = scenario_cubic();
  Bounds bd = box(Eigen::Vector2d(0, 0), Eigen::Vector2d(2, 8));
  Projection pr = scenario_projection(m, 40);
  for (Approach ap : {Approach::unconditional, Approach::conditional}) {
    GoalSpec g;
    g.power_goal = 0.8;
    g.approach = ap;
    double t = power_threshold(m, pr, g, bd, c);
    CHECK(t > expit(0.1));
    CHECK(power_goal_met_at(t, m, pr, g));
    CHECK_FALSE(power_goal_met_at(t - 1e-6, m, pr, g));
  }
  GoalSpec g;
  g.power_goal = 0.8;
  double t = power_threshold(m, pr, g, bd, c);
  Vec x = min_cost_subject_to_threshold(m, c, bd, t);
  CHECK(projected_power(x, m, pr, g) >= 0.8 - 1e-6);
}

TEST_CASE("power threshold signals an unreachable goal") {
  FittedModel m = scenario_truth();
  Bounds bd = box(Eigen::Vector2d(0, 0), Eigen::Vector2d(2, 8));
  GoalSpec g;
  g.power_goal = 0.99;
  CHECK_THROWS_AS(power_threshold(m, scenario_projection(m, 5), g, bd, scenario_cubic()), NoThresholdError);
  GoalSpec none;
  none.outcome_goal = 0.7;
  CHECK_THROWS_AS(power_threshold(m, scenario_projection(m, 5), none, bd, scenario_cubic()), ValidationError);
}

TEST_CASE("recommend picks the regime from the goals") {
  FittedModel m = scenario_truth();
  CostFunction c = scenario_cubic();
  Bounds bd = box(Eigen::Vector2d(0, 0), Eigen::Vector2d(2, 8));
  Vec stage1 = Eigen::Vector2d(0.5, 2);

  GoalSpec g;
  g.outcome_goal = 0.7;
  auto r = recommend(m, scenario_projection(m, 40), g, c, bd, stage1);
  CHECK(r.regime == Regime::goal_feasible);
  CHECK(r.achieved_outcome == doctest::Approx(0.7).epsilon(1e-9));
  CHECK_FALSE(r.power_binding);

  g.power_goal = 0.99;
  r = recommend(m, scenario_projection(m, 5), g, c, bd, stage1);
  CHECK(r.regime == Regime::pmax_fallback);
  CHECK(r.power_binding);
  CHECK(r.achieved_outcome == doctest::Approx(p_max(m, bd)).epsilon(1e-9));

  g.power_goal = 0.8;
  r = recommend(m, scenario_projection(m, 40), g, c, bd, stage1);
  CHECK(r.regime == Regime::goal_feasible);
  CHECK(r.power_threshold.has_value());
  CHECK(r.required_threshold >= 0.7);
  CHECK(r.projected_power.has_value());

  g.outcome_goal = 0.95;
  g.power_goal.reset();
  r = recommend(m, scenario_projection(m, 40), g, c, bd, stage1);
  CHECK(r.regime == Regime::shrinking_fallback);
  CHECK(bd.contains(r.x_hat));
}

TEST_CASE("shrinking keeps packages inside the box and moves strong effects up") {
  Bounds bd = box(Eigen::Vector2d(0, 0), Eigen::Vector2d(2, 8));
  std::mt19937_64 rng(7);
  std::normal_distribution<double> N(0, 1);
  for (int rep = 0; rep < 50; ++rep) {
    FittedModel m = model_from_beta(Eigen::Vector3d(N(rng), N(rng), N(rng)));
    Vec x0 = Eigen::Vector2d(1, 4);
    Vec x = shrinking_method(m, bd, x0, 0.99);
    CHECK(bd.contains(x));
    for (int p = 0; p < 2; ++p)
      if (m.beta(p + 1) <= 0) CHECK(x(p) == x0(p));
      else CHECK(x(p) >= x0(p));
  }
}

TEST_CASE("plan_stage1 rejects Wald power goals and infeasible guesses") {
  FittedModel m = scenario_truth();
  Bounds bd = box(Eigen::Vector2d(0, 0), Eigen::Vector2d(2, 8));
  std::vector<PlannedCenter> planned = {{Arm::control, 40}, {Arm::intervention, 40}};
  GoalSpec g;
  g.outcome_goal = 0.7;
  g.power_goal = 0.8;
  g.test = TestKind::wald_binary;
  CHECK_THROWS_AS(plan_stage1(m, g, scenario_cubic(), bd, planned), ValidationError);
  g.test = TestKind::z_unpooled;
  g.outcome_goal = 0.95;
  CHECK_THROWS_AS(plan_stage1(m, g, scenario_cubic(), bd, planned), InfeasibleError);
  g.outcome_goal = 0.7;
  auto r = plan_stage1(m, g, scenario_cubic(), bd, planned);
  CHECK(r.achieved_outcome >= 0.7 - 1e-9);
}

TEST_CASE("goal validation") {
  GoalSpec g;
  CHECK_THROWS_AS(g.validate(true), ValidationError);
  g.power_goal = 0.8;
  CHECK_NOTHROW(g.validate(true));
  g.outcome_goal = 1.2;
  CHECK_THROWS_AS(g.validate(true), ValidationError);
  g.test = TestKind::t_unpooled;
  CHECK_NOTHROW(g.validate(false));
  CHECK_THROWS_AS(g.validate(true), ValidationError);
  g.test = TestKind::z_unpooled;
  g.outcome_goal = 0.7;
  g.test = TestKind::wald_binary;
  g.approach = Approach::conditional;
  CHECK_THROWS_AS(g.validate(true), ValidationError);
  g.approach = Approach::unconditional;
  g.per_center = true;
  CHECK_NOTHROW(g.validate(true));
  g.test = TestKind::z_unpooled;
  CHECK_THROWS_AS(g.validate(true), ValidationError);
}

TEST_CASE("integerize rounds toward the goal and stays in bounds") {
  FittedModel m = model_from_beta(Eigen::Vector3d(std::log(0.16), std::log(0.888) / 5, std::log(1.144)));
  Bounds bd = box(Eigen::Vector2d(1, 1), Eigen::Vector2d(40, 5));
  Vec x = integerize(m, bd, Eigen::Vector2d(21.012, 1.0), Direction::decrease);
  CHECK(x(0) == 22);
  CHECK(x(1) == 1);
  x = integerize(m, bd, Eigen::Vector2d(39.5, 3.7), Direction::decrease);
  CHECK(x(0) == 40);
  CHECK(x(1) == 3);
  x = integerize(m, bd, Eigen::Vector2d(5.0000000001, 2), Direction::decrease);
  CHECK(x(0) == 5);
}
