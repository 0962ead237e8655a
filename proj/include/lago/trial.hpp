#ifndef LAGO_TRIAL_HPP
#define LAGO_TRIAL_HPP

#include <optional>
#include <string>
#include <vector>

#include "lago/cost.hpp"
#include "lago/model.hpp"
#include "lago/optimizer.hpp"
#include "lago/power.hpp"

namespace lago {

enum class OutcomeKind { binary, continuous };

struct TrialConfig {
  OutcomeKind outcome = OutcomeKind::binary;
  Link link = Link::logit();
  std::vector<std::string> components;
  Bounds bounds;
  CostFunction cost;
  GoalSpec goals;
  // planned centers of every stage; its size is K
  std::vector<std::vector<PlannedCenter>> stages;
  // package delivered in stage 1, used by the shrinking fallback
  Vec stage1_x;
  // optional coefficients: pre-trial guesses or published estimates
  std::optional<Vec> beta;
  double assumed_variance = 0.0;

  int K() const { return static_cast<int>(stages.size()); }
  int P() const { return static_cast<int>(bounds.size()); }
  void validate() const;
};

enum class TrialStatus { awaiting, complete, stopped_futility };

std::string to_string(TrialStatus s);
TrialStatus trial_status_from_string(const std::string& s);

struct FutilityReport {
  bool futile = false;
  std::optional<double> best_projected_power;  // empty when no power goal
};

// Value type; every transition returns a new state.
struct TrialState {
  TrialConfig config;
  std::vector<StageRecord> completed;
  std::vector<Recommendation> recommendations;
  TrialStatus status = TrialStatus::awaiting;
  // deviations noticed during ingest (out-of-bounds actual packages)
  std::vector<std::string> warnings;

  int next_stage() const { return static_cast<int>(completed.size()) + 1; }
};

TrialState start_trial(TrialConfig config);

/// Appends the next stage. Actual packages outside the bounds are accepted
/// with a warning. Throws OutOfOrderStageError unless the record is the
/// next expected stage of an unfinished trial.
TrialState ingest_stage(const TrialState& state, StageRecord record);

// Model refitted on every completed stage.
FittedModel fit_completed(const TrialState& state);

/// Recommendation for the next stage from all completed stages. The futility
/// flag is filled in when a power goal is configured.
Recommendation next_recommendation(const TrialState& state);

TrialState with_recommendation(const TrialState& state, Recommendation rec);

// Operator decision; the engine never stops on its own.
TrialState stop_for_futility(const TrialState& state);

/// Optimal package from all data under the outcome goal alone.
Recommendation final_optimal(const TrialState& state);

/// Projected power at the best achievable package vs the power goal.
FutilityReport check_futility(const TrialState& state);

FinalTestResult final_analysis(const TrialState& state);

/// Projection at the start of stage 2 when stage 1 is known only through
/// its arm totals; every later planned center counts as future.
Projection summary_projection(const TrialConfig& cfg, const ArmSummary& observed);

}  // namespace lago

#endif
