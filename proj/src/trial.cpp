#include "lago/trial.hpp"

#include <cmath>
#include <sstream>

#include "lago/errors.hpp"

namespace lago {

void TrialConfig::validate() const {
  bounds.validate();
  const int P = this->P();
  if (!components.empty() && static_cast<int>(components.size()) != P)
    throw ValidationError("component names do not match the bounds");
  if (cost.components() != P) throw ValidationError("cost dimension does not match the bounds");
  if (K() < 2) throw ValidationError("a trial needs at least two stages");
  for (const auto& st : stages) {
    bool n1 = false, n0 = false;
    for (const auto& c : st) {
      if (c.n < 1) throw ValidationError("planned center size must be positive");
      (c.arm == Arm::intervention ? n1 : n0) = true;
    }
    if (!n1 || !n0) throw ValidationError("every stage needs intervention and control centers");
  }
  if (stage1_x.size() != P) throw ValidationError("stage1_x has the wrong length");
  if (!bounds.contains(stage1_x)) throw ValidationError("stage1_x lies outside the bounds");
  if (beta && beta->size() != P + 1) throw ValidationError("beta must have P+1 entries");
  goals.validate(outcome == OutcomeKind::binary);
  if (outcome == OutcomeKind::binary && link.kind() != LinkKind::logit)
    throw ValidationError("binary outcomes use the logit link");
}

std::string to_string(TrialStatus s) {
  switch (s) {
    case TrialStatus::awaiting: return "awaiting";
    case TrialStatus::complete: return "complete";
    case TrialStatus::stopped_futility: return "stopped-futility";
  }
  return "?";
}

TrialStatus trial_status_from_string(const std::string& s) {
  if (s == "awaiting") return TrialStatus::awaiting;
  if (s == "complete") return TrialStatus::complete;
  if (s == "stopped-futility") return TrialStatus::stopped_futility;
  throw ValidationError("unknown trial status '" + s + "'");
}

TrialState start_trial(TrialConfig config) {
  config.validate();
  TrialState st;
  st.config = std::move(config);
  return st;
}

TrialState ingest_stage(const TrialState& state, StageRecord record) {
  if (state.status != TrialStatus::awaiting) throw OutOfOrderStageError("trial is no longer accepting stages");
  if (record.stage != state.next_stage()) {
    std::ostringstream os;
    os << "expected stage " << state.next_stage() << ", got " << record.stage;
    throw OutOfOrderStageError(os.str());
  }
  const auto& cfg = state.config;
  TrialState next = state;
  bool n1 = false, n0 = false;
  for (std::size_t j = 0; j < record.centers.size(); ++j) {
    const auto& c = record.centers[j];
    if (c.a.size() != cfg.P()) throw ValidationError("center package has the wrong length");
    if (c.n < 1) throw ValidationError("center without subjects");
    if (c.arm == Arm::control && !c.a.isZero()) throw ValidationError("control centers must carry the zero package");
    if (cfg.outcome == OutcomeKind::binary) {
      if (c.sum < 0 || c.sum > c.n || c.sum != std::floor(c.sum) || c.sumsq != c.sum)
        throw ValidationError("binary outcomes must be 0 or 1");
    }
    if (c.arm == Arm::intervention && !cfg.bounds.contains(c.a)) {
      std::ostringstream os;
      os << "stage " << record.stage << " center " << j + 1 << ": actual package outside bounds";
      next.warnings.push_back(os.str());
    }
    (c.arm == Arm::intervention ? n1 : n0) = true;
  }
  if (!n1 || !n0) throw ValidationError("stage needs intervention and control centers");
  next.completed.push_back(std::move(record));
  if (static_cast<int>(next.completed.size()) == cfg.K()) next.status = TrialStatus::complete;
  return next;
}

FittedModel fit_completed(const TrialState& state) {
  if (state.completed.empty()) throw ValidationError("no completed stages");
  if (state.config.outcome == OutcomeKind::binary) return fit_binary(state.completed);
  return fit_continuous(state.completed, state.config.link);
}

namespace {

Vec fallback_package(const TrialState& state) {
  if (!state.recommendations.empty()) return state.recommendations.back().x_hat;
  return state.config.stage1_x;
}

Projection projection_from(const TrialState& state) {
  std::vector<Center> observed = pooled_centers(state.completed);
  std::vector<PlannedCenter> future;
  for (int l = static_cast<int>(state.completed.size()); l < state.config.K(); ++l)
    future.insert(future.end(), state.config.stages[l].begin(), state.config.stages[l].end());
  return make_projection(std::move(observed), std::move(future));
}

}  // namespace

Recommendation next_recommendation(const TrialState& state) {
  if (state.status != TrialStatus::awaiting) throw ValidationError("trial has no stage left to recommend");
  if (state.completed.empty()) throw ValidationError("no completed stages; use stage-1 planning");
  const auto& cfg = state.config;
  FittedModel model = fit_completed(state);
  Recommendation rec = recommend_stage_k(model, state.completed, cfg.stages, state.next_stage(), cfg.goals, cfg.cost,
                                         cfg.bounds, fallback_package(state));
  if (cfg.goals.power_goal) rec.futile = check_futility(state).futile;
  return rec;
}

TrialState with_recommendation(const TrialState& state, Recommendation rec) {
  TrialState next = state;
  next.recommendations.push_back(std::move(rec));
  return next;
}

TrialState stop_for_futility(const TrialState& state) {
  if (state.status == TrialStatus::complete) throw ValidationError("trial already complete");
  TrialState next = state;
  next.status = TrialStatus::stopped_futility;
  return next;
}

Recommendation final_optimal(const TrialState& state) {
  if (state.status != TrialStatus::complete) throw ValidationError("final optimum needs a complete trial");
  const auto& cfg = state.config;
  return recommend_outcome_only(fit_completed(state), cfg.goals, cfg.cost, cfg.bounds, fallback_package(state));
}

FutilityReport check_futility(const TrialState& state) {
  FutilityReport rep;
  const auto& cfg = state.config;
  if (!cfg.goals.power_goal) return rep;
  if (state.completed.empty()) throw ValidationError("no completed stages");
  if (static_cast<int>(state.completed.size()) >= cfg.K()) return rep;
  FittedModel model = fit_completed(state);
  Projection pr = projection_from(state);
  Vec x = p_max_package(model, cfg.bounds, cfg.goals.direction);
  try {
    rep.best_projected_power = projected_power(x, model, pr, cfg.goals);
  } catch (const NumericalError&) {
    rep.best_projected_power = 0.0;
  }
  rep.futile = *rep.best_projected_power < *cfg.goals.power_goal;
  return rep;
}

FinalTestResult final_analysis(const TrialState& state) {
  if (state.completed.empty()) throw ValidationError("no completed stages");
  return final_test(pooled_centers(state.completed), state.config.goals.test, state.config.goals.alpha,
                    state.config.link);
}

Projection summary_projection(const TrialConfig& cfg, const ArmSummary& observed) {
  ArmSummary arms = observed;
  arms.n1_fut = arms.n0_fut = 0;
  for (int l = 1; l < cfg.K(); ++l)
    for (const auto& c : cfg.stages[l]) (c.arm == Arm::intervention ? arms.n1_fut : arms.n0_fut) += c.n;
  return make_projection(arms);
}

}  // namespace lago
