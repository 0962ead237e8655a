#include <cmath>

#include "doctest.h"
#include "lago/distributions.hpp"
#include "lago/errors.hpp"
#include "lago/power.hpp"

using namespace lago;

namespace {

struct Totals {
  double S1, N1o, S0, N0o, n1f, n0f;
};

// Plain transcription of the projected two-proportion noncentrality.
double lambda_oracle(const Totals& d, double t, double c0) {
  double N1 = d.N1o + d.n1f, N0 = d.N0o + d.n0f;
  double p1 = (d.S1 + d.n1f * t) / N1;
  double p0 = (d.S0 + d.n0f * c0) / N0;
  double var = p1 * (1 - p1) / N1 + p0 * (1 - p0) / N0;
  return (p1 - p0) * (p1 - p0) / var;
}

// Plain transcription of the conditional constraint, sd scaling.
double slack_oracle(const Totals& d, double t, double c0, double alpha, double pi, double sign) {
  double N1 = d.N1o + d.n1f, N0 = d.N0o + d.n0f;
  double p1 = (d.S1 + d.n1f * t) / N1;
  double p0 = (d.S0 + d.n0f * c0) / N0;
  double G = std::sqrt(p1 * (1 - p1) / N1 + p0 * (1 - p0) / N0);
  double sig = std::sqrt(d.n1f * t * (1 - t) / (N1 * N1) + d.n0f * c0 * (1 - c0) / (N0 * N0));
  double obs = d.S1 / N1 - d.S0 / N0;
  double delta = d.n1f * t / N1 - d.n0f * c0 / N0;
  return normal_quantile(1 - alpha / 2) * G - sign * obs - sign * delta - normal_quantile(1 - pi) * sig;
}

Projection proj(const Totals& d) {
  ArmSummary a;
  a.s1_obs = d.S1;
  a.n1_obs = d.N1o;
  a.s0_obs = d.S0;
  a.n0_obs = d.N0o;
  a.n1_fut = d.n1f;
  a.n0_fut = d.n0f;
  return make_projection(a);
}

const Totals kFixtures[] = {
    {80, 120, 21, 40, 80, 80}, {92, 730, 154, 1049, 405, 444}, {10, 30, 9, 30, 60, 20}, {55, 100, 40, 100, 200, 200}};

}  // namespace

TEST_CASE("unconditional lambda matches the formula transcription") {
  FittedModel m = model_from_beta(Eigen::Vector3d(0.1, 0.3, 0.15));
  const double c0 = expit(0.1);
  for (const auto& d : kFixtures)
    for (double t : {0.3, 0.55, 0.7, 0.85}) {
      auto r = unconditional_lambda_at(t, m, proj(d), TestKind::z_unpooled);
      CHECK(std::fabs(r.lambda - lambda_oracle(d, t, c0)) <= 1e-12 * std::max(1.0, r.lambda));
      CHECK(r.crit_scale == 1.0);
    }
}

TEST_CASE("conditional slack matches the formula transcription") {
  FittedModel m = model_from_beta(Eigen::Vector3d(-1.6, -0.02, 0.13));
  const double c0 = expit(-1.6);
  for (const auto& d : kFixtures)
    for (double t : {0.05, 0.1, 0.3})
      for (double pi : {0.8, 0.9})
        for (Direction dir : {Direction::increase, Direction::decrease}) {
          double got = conditional_constraint_slack_at(t, m, proj(d), TestKind::z_unpooled, 0.05, pi, dir);
          double want = slack_oracle(d, t, c0, 0.05, pi, direction_sign(dir));
          CHECK(std::fabs(got - want) <= 1e-12);
        }
}

TEST_CASE("conditional power equals the goal where the slack vanishes") {
  FittedModel m = model_from_beta(Eigen::Vector3d(0.1, 0.3, 0.15));
  Projection pr = proj({80, 120, 21, 40, 80, 80});
  for (double pi : {0.6, 0.8, 0.9}) {
    double lo = 0.3, hi = 0.99;
    for (int i = 0; i < 200; ++i) {
      double mid = 0.5 * (lo + hi);
      (conditional_constraint_slack_at(mid, m, pr, TestKind::z_unpooled, 0.05, pi) <= 0 ? hi : lo) = mid;
    }
    CHECK(conditional_power_at(hi, m, pr, TestKind::z_unpooled, 0.05) == doctest::Approx(pi).epsilon(1e-8));
  }
}

TEST_CASE("slack falls and lambda rises as the projected outcome improves") {
  FittedModel m = model_from_beta(Eigen::Vector3d(0.1, 0.3, 0.15));
  for (const auto& d : kFixtures) {
    Projection pr = proj(d);
    double prev_slack = 1e9;
    for (double t = 0.6; t < 0.95; t += 0.02) {
      double s = conditional_constraint_slack_at(t, m, pr, TestKind::z_unpooled, 0.05, 0.8);
      CHECK(s < prev_slack);
      prev_slack = s;
    }
  }
  Projection pr = proj({60, 120, 21, 40, 80, 80});
  double prev = -1;
  for (double t = 0.6; t < 0.95; t += 0.02) {
    double l = unconditional_lambda_at(t, m, pr, TestKind::z_unpooled).lambda;
    CHECK(l > prev);
    prev = l;
  }
}

TEST_CASE("unconditional power at lambda_min equals the goal") {
  LambdaResult r;
  r.lambda = lambda_min(0.05, 0.8, 1);
  CHECK(unconditional_power(r, 0.05, 1) == doctest::Approx(0.8).epsilon(1e-7));
  r.lambda = 0;
  CHECK(unconditional_power(r, 0.05, 1) == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("pooled variant rescales the critical value") {
  FittedModel m = model_from_beta(Eigen::Vector3d(0.1, 0.3, 0.15));
  Projection pr = proj({80, 120, 21, 40, 80, 80});
  auto u = unconditional_lambda_at(0.7, m, pr, TestKind::z_unpooled);
  auto p = unconditional_lambda_at(0.7, m, pr, TestKind::z_pooled);
  CHECK(p.lambda == doctest::Approx(u.lambda).epsilon(1e-15));
  CHECK(p.crit_scale != 1.0);
}

TEST_CASE("t-test projection uses the updated intervention variance") {
  ArmSummary a;
  a.n1_obs = 30;
  a.s1_obs = 30 * 1.2;
  a.mean1_obs = 1.2;
  a.var1_obs = 0.9;
  a.n0_obs = 25;
  a.s0_obs = 25 * 0.8;
  a.mean0_obs = 0.8;
  a.var0_obs = 1.1;
  a.n1_fut = 40;
  a.n0_fut = 20;
  FittedModel m = model_from_beta(Eigen::Vector2d(0.8, 0.25), Link::identity());
  const double t = 1.7, N1 = 70, N0 = 45;
  double v1 = ((N1 - 2) * 0.9 + 30 * 40 / N1 * (t - 1.2) * (t - 1.2)) / (N1 - 1);
  double P1 = (36 + 40 * t) / N1, P0 = (20 + 20 * 0.8) / N0;
  double want = (P1 - P0) * (P1 - P0) / (v1 / N1 + 1.1 / N0);
  auto r = unconditional_lambda_at(t, m, make_projection(a), TestKind::t_unpooled);
  CHECK(std::fabs(r.lambda - want) <= 1e-12 * want);
}

TEST_CASE("final test on the all-stage BetterBirth counts") {
  std::vector<Center> c = {Center::binary(Arm::intervention, Vec::Zero(2), 1135, 140),
                           Center::binary(Arm::control, Vec::Zero(2), 1493, 221)};
  auto r = final_test(c, TestKind::z_unpooled, 0.05);
  CHECK(r.p_value == doctest::Approx(0.06568436940292807).epsilon(1e-10));
  CHECK_FALSE(r.reject);
  std::swap(c[0].arm, c[1].arm);
  CHECK(final_test(c, TestKind::z_unpooled, 0.05).p_value == doctest::Approx(r.p_value).epsilon(1e-14));
}

TEST_CASE("z statistic uses the unpooled variance") {
  ArmSummary s;
  s.n1_obs = 100;
  s.n0_obs = 100;
  s.s1_obs = 60;
  s.s0_obs = 40;
  double z = z_statistic(s, false);
  CHECK(z == doctest::Approx(0.2 / std::sqrt(0.48 / 100)).epsilon(1e-14));
  CHECK_THROWS_AS(z_statistic(ArmSummary{}, false), DegenerateVarianceError);
}

TEST_CASE("Wald final test uses the chi-square tail") {
  std::vector<Center> c;
  const double a[4][2] = {{0, 0}, {1, 0}, {0, 4}, {1, 4}};
  const int s[4] = {21, 26, 27, 30};
  for (int j = 0; j < 4; ++j)
    c.push_back(Center::binary(j ? Arm::intervention : Arm::control, Eigen::Vector2d(a[j][0], a[j][1]), 40, s[j]));
  auto r = final_test(c, TestKind::wald_binary, 0.05);
  CHECK(r.df == 2);
  CHECK(r.p_value == doctest::Approx(chisq_sf(r.statistic, 2)).epsilon(1e-14));
  CHECK(r.reject == (r.statistic > chisq_critical(0.05, 2)));
}

TEST_CASE("Wald noncentrality from projected information") {
  FittedModel m = model_from_beta(Eigen::Vector3d(0.1, 0.3, 0.15));
  std::vector<Center> obs;
  const double a[4][2] = {{0, 0}, {1, 0}, {0, 4}, {1, 4}};
  for (int j = 0; j < 4; ++j)
    obs.push_back(Center::binary(j ? Arm::intervention : Arm::control, Eigen::Vector2d(a[j][0], a[j][1]), 40, 20));
  std::vector<PlannedCenter> fut = {{Arm::control, 40}, {Arm::intervention, 40}};
  Projection pr = make_projection(obs, fut);
  Vec x = Eigen::Vector2d(0.5, 4.0);
  auto r = unconditional_lambda(x, m, pr, TestKind::wald_binary);
  // hand assembly of the information matrix
  Mat I = Mat::Zero(3, 3);
  auto add = [&](double a1, double a2, double n) {
    Eigen::Vector3d row(1, a1, a2);
    double p = expit(row.dot(m.beta));
    I += n * p * (1 - p) * row * row.transpose();
  };
  for (int j = 0; j < 4; ++j) add(a[j][0], a[j][1], 40);
  add(0, 0, 40);
  add(0.5, 4.0, 40);
  Mat cov = I.inverse().bottomRightCorner(2, 2);
  Vec b1 = m.beta.tail(2);
  CHECK(r.lambda == doctest::Approx(b1.dot(cov.inverse() * b1)).epsilon(1e-12));
  CHECK_THROWS_AS(conditional_constraint_slack(x, m, pr, TestKind::wald_binary, 0.05, 0.8), ValidationError);
}

TEST_CASE("string conversions round-trip and reject unknown names") {
  for (TestKind t : {TestKind::z_unpooled, TestKind::z_pooled, TestKind::t_unpooled, TestKind::t_pooled,
                     TestKind::wald_binary, TestKind::wald_continuous})
    CHECK(test_from_string(to_string(t)) == t);
  CHECK_THROWS_AS(test_from_string("chisq"), ValidationError);
  CHECK_THROWS_AS(approach_from_string("both"), ValidationError);
  CHECK_THROWS_AS(direction_from_string("up"), ValidationError);
}
