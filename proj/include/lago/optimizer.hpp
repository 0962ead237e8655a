#ifndef LAGO_OPTIMIZER_HPP
#define LAGO_OPTIMIZER_HPP

#include <optional>
#include <string>
#include <vector>

#include "lago/cost.hpp"
#include "lago/model.hpp"
#include "lago/power.hpp"

namespace lago {

struct GoalSpec {
  // empty: power goal only; the control outcome stands in as the floor
  std::optional<double> outcome_goal;
  Direction direction = Direction::increase;
  std::optional<double> power_goal;
  double alpha = 0.05;
  Approach approach = Approach::unconditional;
  TestKind test = TestKind::z_unpooled;
  ConditionalScale conditional_scale = ConditionalScale::sd;
  // Wald kinds only: one package per future intervention center.
  bool per_center = false;

  void validate(bool binary) const;
};

enum class Regime { goal_feasible, pmax_fallback, shrinking_fallback };

std::string to_string(Regime r);

struct Recommendation {
  Vec x_hat;
  Regime regime = Regime::goal_feasible;
  double achieved_outcome = 0.0;
  double required_threshold = 0.0;       // threshold the solver was run at
  std::optional<double> power_threshold; // outcome needed for the power goal, if any
  std::optional<double> projected_power;
  double cost = 0.0;
  bool power_binding = false;
  std::vector<Vec> per_center;  // filled in per-center mode
  std::optional<bool> futile;   // set by the trial layer when a power goal exists
};

// Best achievable model outcome within the bounds (the minimum for a
// decrease goal).
double p_max(const FittedModel& model, const Bounds& bounds, Direction dir = Direction::increase);

// The package reaching p_max; ties (zero effect) go to the lower bound.
Vec p_max_package(const FittedModel& model, const Bounds& bounds, Direction dir = Direction::increase);

/// Minimizes cost over the box subject to b'x >= h.
///
/// Linear costs use an exact greedy allocation by |b_p|/|c_p|. Other costs
/// combine the per-component local minima that already satisfy the
/// constraint with a multi-start pairwise exchange search on the surface
/// b'x = h. Throws InfeasibleError when no box point satisfies the
/// constraint.
Vec min_cost_affine(const CostFunction& cost, const Bounds& bounds, const VecRef& b, double h);

// Linear-cost branch of min_cost_affine, exposed for testing.
Vec min_cost_linear(const Vec& c, const Bounds& bounds, const VecRef& b, double h);

Vec min_cost_subject_to_threshold(const FittedModel& model, const CostFunction& cost, const Bounds& bounds,
                                  double threshold, Direction dir = Direction::increase);

/// Smallest outcome (largest for a decrease goal) at which the power goal
/// holds. 1-df tests: bisection on the outcome between the control value
/// and p_max. Wald tests: bisection along the min-cost path. Returns the
/// control value when the goal already holds there; throws
/// NoThresholdError when it fails at p_max.
double power_threshold(const FittedModel& model, const Projection& pr, const GoalSpec& goals, const Bounds& bounds,
                       const CostFunction& cost);

// True when the power goal holds at outcome t (1-df tests).
bool power_goal_met_at(double t, const FittedModel& model, const Projection& pr, const GoalSpec& goals);

// Projected power of the final test if `x` is delivered at every future
// intervention center.
double projected_power(const VecRef& x, const FittedModel& model, const Projection& pr, const GoalSpec& goals);

Vec shrinking_method(const FittedModel& model, const Bounds& bounds, const VecRef& stage1_x, double outcome_goal,
                     Direction dir = Direction::increase);

Recommendation recommend(const FittedModel& model, const Projection& pr, const GoalSpec& goals,
                         const CostFunction& cost, const Bounds& bounds, const VecRef& stage1_fallback_x);

// Outcome goal only; used for the final optimal-intervention estimate.
Recommendation recommend_outcome_only(const FittedModel& model, const GoalSpec& goals, const CostFunction& cost,
                                      const Bounds& bounds, const VecRef& fallback_x);

/// Stage-1 plan from pre-trial coefficients. Every planned center counts as
/// future, so arm totals sit at their model expectations. Throws
/// InfeasibleError when p_max under `beta0` misses the outcome goal.
/// `assumed_variance` feeds the t-tests, which have no observed spread yet.
Recommendation plan_stage1(const FittedModel& beta0, const GoalSpec& goals, const CostFunction& cost,
                           const Bounds& bounds, const std::vector<PlannedCenter>& planned,
                           double assumed_variance = 0.0);

/// Recommendation for stage k (1-based, k >= 2) from completed stages
/// 1..k-1 and the planned centers of every stage.
Recommendation recommend_stage_k(const FittedModel& model, const std::vector<StageRecord>& completed,
                                 const std::vector<std::vector<PlannedCenter>>& planned, int k,
                                 const GoalSpec& goals, const CostFunction& cost, const Bounds& bounds,
                                 const VecRef& fallback_x);

/// Wald per-center mode: starts from the common package and runs block
/// coordinate descent over the centers' packages, accepting only moves that
/// lower total cost while keeping the mean outcome at `threshold` and the
/// projected Wald power at the goal.
// Rounds each component to an integer on the side that moves the outcome
// toward the goal (up for a helpful effect, down otherwise), within bounds.
Vec integerize(const FittedModel& model, const Bounds& bounds, const VecRef& x, Direction dir = Direction::increase);

std::vector<Vec> optimize_per_center(const FittedModel& model, const Projection& pr, const GoalSpec& goals,
                                     const CostFunction& cost, const Bounds& bounds, const VecRef& start,
                                     double threshold);

}  // namespace lago

#endif
