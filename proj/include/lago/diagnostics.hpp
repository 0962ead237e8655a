#ifndef LAGO_DIAGNOSTICS_HPP
#define LAGO_DIAGNOSTICS_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "lago/cost.hpp"
#include "lago/model.hpp"
#include "lago/optimizer.hpp"
#include "lago/sim.hpp"

namespace lago {

// Two-stage layout used for the dominance computation.
struct DominanceDesign {
  std::vector<DesignCenter> stage1;
  std::vector<PlannedCenter> stage2;
  Bounds bounds;
  TestKind test = TestKind::z_unpooled;
  void validate() const;
};

// J-center stage 1 of the simulation scenarios with n subjects per center
// and `int_centers` of J stage-2 centers on the intervention arm.
DominanceDesign scenario_dominance_design(int n, int int_centers = 2);

/// Outcome goal, in percent above the control outcome, beyond which the
/// power goal never binds. Stage-1 outcomes are replaced by their
/// expectations under `beta_star`; returns 0 when the power goal already
/// holds at the control outcome.
double dominance_threshold(const DominanceDesign& design, const Vec& beta_star, double alpha, double pi,
                           Approach approach, ConditionalScale scale = ConditionalScale::sd);

struct PerturbationOptions {
  double epsilon = 0.05;
  int samples = 100;  // L
  double eta = 0.1;
  std::uint64_t seed = 1;
  bool extended = false;
  int grid = 5;  // M, extended mode only
  int threads = 0;
};

struct PerturbationFailure {
  int center = -1;  // grid point; -1 for the base point
  int sample = -1;  // -1 when the center itself failed
  std::string message;
};

struct PerturbationReport {
  std::string norm = "l2";
  std::uint64_t seed = 0;
  double epsilon = 0, eta = 0;
  int samples = 0;
  std::vector<Vec> centers;      // beta around which samples were drawn
  std::vector<Vec> solutions;    // solution at each center
  std::vector<double> delta_max; // one per center
  double overall_delta_max = 0;
  bool pass = false;
  std::vector<PerturbationFailure> failures;
};

/// Samples `samples` coefficient vectors uniformly in the l2 ball of radius
/// epsilon around each center, solves the min-cost problem at `goal` for
/// every sample and reports the largest l2 distance to the center's
/// solution. The base mode uses model.beta as the only center; extended
/// mode uses `grid` points whose coordinates share the quantile levels
/// (m / (M + 1)) of the 95% Wald intervals from model.covariance. Failed
/// solves are listed and count as a failed check.
PerturbationReport verify_assumption7(const FittedModel& model, const CostFunction& cost, const Bounds& bounds,
                                      double goal, Direction dir, const PerturbationOptions& opt);

// Uniform draw from the l2 ball of the given radius around `center`.
Vec sample_ball(std::mt19937_64& rng, const Vec& center, double radius);

}  // namespace lago

#endif
