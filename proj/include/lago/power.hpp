#ifndef LAGO_POWER_HPP
#define LAGO_POWER_HPP

#include <string>
#include <vector>

#include "lago/model.hpp"

namespace lago {

enum class TestKind { z_unpooled, z_pooled, t_unpooled, t_pooled, wald_binary, wald_continuous };
enum class Approach { unconditional, conditional };
enum class Direction { increase, decrease };

// How the conditional constraint scales z_pi. `sd` standardizes by the
// projected standard deviation; `variance` multiplies by the variance as in
// the closed form usually quoted for the conditional approach.
enum class ConditionalScale { sd, variance };

std::string to_string(TestKind t);
std::string to_string(Approach a);
std::string to_string(Direction d);
std::string to_string(ConditionalScale s);
TestKind test_from_string(const std::string& s);
Approach approach_from_string(const std::string& s);
Direction direction_from_string(const std::string& s);
ConditionalScale conditional_scale_from_string(const std::string& s);

bool is_wald(TestKind t);
bool is_binary_test(TestKind t);

inline double direction_sign(Direction d) { return d == Direction::increase ? 1.0 : -1.0; }

struct PlannedCenter {
  Arm arm = Arm::control;
  int n = 0;
};

// Arm-level totals split into the observed part (completed stages) and the
// projected part (stages not yet run).
struct ArmSummary {
  double n1_obs = 0, n0_obs = 0;
  double s1_obs = 0, s0_obs = 0;
  double n1_fut = 0, n0_fut = 0;
  // observed per-arm means and (n-1)-denominator variances
  double mean1_obs = 0, mean0_obs = 0;
  double var1_obs = 0, var0_obs = 0;

  double N1() const { return n1_obs + n1_fut; }
  double N0() const { return n0_obs + n0_fut; }
};

ArmSummary summarize(const std::vector<Center>& observed, const std::vector<PlannedCenter>& future);

// Inputs for projecting the end-of-trial test from the stages seen so far.
struct Projection {
  ArmSummary arms;
  std::vector<Center> observed;
  std::vector<PlannedCenter> future;
};

Projection make_projection(std::vector<Center> observed, std::vector<PlannedCenter> future);

// Projection from arm totals alone; enough for the 1-df tests.
Projection make_projection(const ArmSummary& arms);

int future_intervention_centers(const Projection& pr);

double z_statistic(const ArmSummary& s, bool pooled);
double t_statistic(const ArmSummary& s, bool pooled);

// W = n b1' inv(Sigma_b1) b1 with Sigma the n-scaled covariance block.
double wald_statistic(const Vec& beta1, const Mat& sigma_b1, double n);
double wald_statistic(const FittedModel& model);

struct LambdaResult {
  double lambda = 0.0;
  // Multiplier on the central critical value (pooled variants); 1 otherwise.
  double crit_scale = 1.0;
  // Projected direction-adjusted mean difference; negative means the test is
  // projected to lean the wrong way. Unused (set to 1) for Wald kinds.
  double drift = 0.0;
};

// 1-df tests depend on the package only through the model outcome at it, so
// these take that outcome t directly.
LambdaResult unconditional_lambda_at(double t, const FittedModel& model, const Projection& pr, TestKind test,
                                     Direction dir = Direction::increase);
LambdaResult unconditional_lambda(const VecRef& x, const FittedModel& model, const Projection& pr, TestKind test,
                                  Direction dir = Direction::increase);
// Wald kinds with one package per future intervention center, in order.
LambdaResult unconditional_lambda_centers(const std::vector<Vec>& xs, const FittedModel& model, const Projection& pr,
                                          TestKind test);

struct SlackParts {
  double slack = 0.0;
  double sigma = 0.0;  // projected sd of the future-stage contribution
  double crit_term = 0.0;
};

SlackParts conditional_slack_parts_at(double t, const FittedModel& model, const Projection& pr, TestKind test,
                                      double alpha, double pi, Direction dir = Direction::increase,
                                      ConditionalScale scale = ConditionalScale::sd);
double conditional_constraint_slack_at(double t, const FittedModel& model, const Projection& pr, TestKind test,
                                       double alpha, double pi, Direction dir = Direction::increase,
                                       ConditionalScale scale = ConditionalScale::sd);
double conditional_constraint_slack(const VecRef& x, const FittedModel& model, const Projection& pr, TestKind test,
                                    double alpha, double pi, Direction dir = Direction::increase,
                                    ConditionalScale scale = ConditionalScale::sd);

// Power implied by a LambdaResult for a level-alpha test with df degrees.
double unconditional_power(const LambdaResult& r, double alpha, double df);

// P(final test rejects in the goal direction | observed data).
double conditional_power_at(double t, const FittedModel& model, const Projection& pr, TestKind test, double alpha,
                            Direction dir = Direction::increase);

struct FinalTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool reject = false;
  int df = 1;
};

// Final analysis on pooled all-stage data. For Wald kinds the model is
// refitted on `data` (logistic or with `link`).
FinalTestResult final_test(const std::vector<Center>& data, TestKind test, double alpha,
                           const Link& link = Link::identity());

}  // namespace lago

#endif
