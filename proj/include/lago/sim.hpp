#ifndef LAGO_SIM_HPP
#define LAGO_SIM_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "lago/cost.hpp"
#include "lago/model.hpp"
#include "lago/optimizer.hpp"
#include "lago/trial.hpp"

namespace lago {

struct DesignCenter {
  Arm arm = Arm::control;
  Vec a;  // stage-1 package; ignored for later stages
  int n = 0;
};

enum class SeKind { naive, sandwich };

struct ScenarioSpec {
  std::string name;
  Vec true_beta;
  OutcomeKind outcome = OutcomeKind::binary;
  Link link = Link::logit();
  double sigma = 1.0;  // continuous outcomes only
  std::vector<DesignCenter> stage1;
  std::vector<std::vector<PlannedCenter>> later;  // stages 2..K
  CostFunction cost;
  Bounds bounds;
  GoalSpec goals;
  int replicates = 1;
  std::uint64_t seed = 0;
  // later stages repeat the stage-1 packages instead of adapting
  bool baseline = false;
  SeKind se = SeKind::naive;
  // optional distortion of recommended packages: (center index, x) -> actual
  std::function<Vec(int, const Vec&)> distortion;

  int K() const { return 1 + static_cast<int>(later.size()); }
  void validate() const;
  // planned sizes of every stage, stage 1 included
  std::vector<std::vector<PlannedCenter>> planned() const;
  // mean of the stage-1 intervention packages
  Vec stage1_centroid() const;
};

struct CoefficientMetrics {
  double true_value = 0, mean = 0;
  double rel_bias = 0;    // |100 (mean - true) / true|; NaN when true is 0
  double se_ratio = 0;    // 100 * mean SE / empirical SD
  double coverage = 0;    // percent of +-1.96 SE intervals covering the truth
};

struct QuantileSummary {
  double mean = 0, q025 = 0, q975 = 0;
};

struct MetricsReport {
  std::string name;
  int replicates = 0;
  int failures = 0;
  std::uint64_t seed = 0;
  std::vector<CoefficientMetrics> coefficients;  // effects only, beta_1p
  double power = 0;      // percent rejections
  double power_mcse = 0; // in percentage points
  Vec true_optimum;
  std::vector<double> opt_rel_bias_stage1, opt_rel_bias_final;
  QuantileSummary propt_stage1, propt_final;
  std::vector<int> regime_counts;  // indexed by Regime
  std::vector<std::string> failure_messages;  // first few
};

// Per-replicate substream: mt19937_64 seeded from (seed, replicate).
std::mt19937_64 replicate_engine(std::uint64_t seed, std::uint64_t replicate);

// Worker count from LAGO_THREADS, else the hardware concurrency.
int thread_count();

// Runs f(i) for i in [0, n) on `threads` workers.
void parallel_for(int n, int threads, const std::function<void(int)>& f);

Center simulate_center(std::mt19937_64& rng, const ScenarioSpec& spec, Arm arm, const Vec& a, int n);

MetricsReport run_scenario(const ScenarioSpec& spec, int threads = 0);

/// Built-in two-stage scenarios "1a", "1b", "2a", "2b" with n subjects per
/// center in both stages. The "2" cases carry no outcome goal and default
/// to a 0.8 power goal; `baseline` in the spec switches them to the
/// non-adaptive comparator.
ScenarioSpec scenario_preset(const std::string& name, int n);

std::string metrics_csv_header(int components);
std::string metrics_csv_row(const MetricsReport& m);

// Linear interpolation between order statistics (type 7).
double quantile(std::vector<double> v, double q);

/// Power of the final unpooled z-test when stage-k outcomes are simulated
/// under `truth` at package `x` and pooled with fixed earlier-stage totals.
double betterbirth_power(const FittedModel& truth, const ArmSummary& earlier,
                         const std::vector<PlannedCenter>& final_stage, const VecRef& x, int replicates,
                         std::uint64_t seed, double alpha = 0.05, int threads = 0);

}  // namespace lago

#endif
