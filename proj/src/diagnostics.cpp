#include "lago/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>

#include "lago/distributions.hpp"
#include "lago/errors.hpp"

namespace lago {

void DominanceDesign::validate() const {
  bounds.validate();
  if (stage1.empty() || stage2.empty()) throw ValidationError("dominance: both stages need centers");
  bool n1 = false, n0 = false;
  for (const auto& c : stage1) {
    if (c.n < 1 || c.a.size() != bounds.size()) throw ValidationError("dominance: bad stage-1 center");
    (c.arm == Arm::intervention ? n1 : n0) = true;
  }
  if (!n1 || !n0) throw ValidationError("dominance: stage 1 needs both arms");
  n1 = n0 = false;
  for (const auto& c : stage2) {
    if (c.n < 1) throw ValidationError("dominance: bad stage-2 center");
    (c.arm == Arm::intervention ? n1 : n0) = true;
  }
  if (!n1 || !n0) throw ValidationError("dominance: stage 2 needs both arms");
  if (is_wald(test)) throw ValidationError("dominance: 1-df tests only");
}

DominanceDesign scenario_dominance_design(int n, int int_centers) {
  if (int_centers < 1 || int_centers > 3) throw ValidationError("dominance: stage 2 has 4 centers");
  DominanceDesign d;
  d.bounds = {Vec::Zero(2), Vec(Eigen::Vector2d(2.0, 8.0))};
  d.stage1 = {{Arm::control, Vec::Zero(2), n},
              {Arm::intervention, Vec(Eigen::Vector2d(1.0, 0.0)), n},
              {Arm::intervention, Vec(Eigen::Vector2d(0.0, 4.0)), n},
              {Arm::intervention, Vec(Eigen::Vector2d(1.0, 4.0)), n}};
  for (int j = 0; j < 4; ++j) d.stage2.push_back({j < int_centers ? Arm::intervention : Arm::control, n});
  return d;
}

double dominance_threshold(const DominanceDesign& design, const Vec& beta_star, double alpha, double pi,
                           Approach approach, ConditionalScale scale) {
  design.validate();
  if (beta_star.size() != design.bounds.size() + 1) throw ValidationError("dominance: beta has the wrong length");
  const bool binary = is_binary_test(design.test);
  if (!binary) throw ValidationError("dominance: binary tests only");
  const FittedModel truth = model_from_beta(beta_star, Link::logit());

  std::vector<Center> observed;
  for (const auto& c : design.stage1) {
    Center e;
    e.arm = c.arm;
    e.a = c.a;
    e.n = c.n;
    e.sum = c.n * predict(truth, c.a);
    e.sumsq = e.sum;
    observed.push_back(e);
  }
  Projection pr = make_projection(std::move(observed), design.stage2);

  GoalSpec g;
  g.power_goal = pi;
  g.alpha = alpha;
  g.approach = approach;
  g.test = design.test;
  g.conditional_scale = scale;
  g.validate(true);

  const double c0 = truth.link.inverse(truth.beta(0));
  const double top = p_max(truth, design.bounds);
  if (power_goal_met_at(c0, truth, pr, g)) return 0.0;
  if (!power_goal_met_at(top, truth, pr, g)) throw NoThresholdError("dominance: power goal unreachable");
  double lo = c0, hi = top;
  while (hi - lo > 1e-9) {
    double mid = 0.5 * (lo + hi);
    (power_goal_met_at(mid, truth, pr, g) ? hi : lo) = mid;
  }
  return 100.0 * (hi / c0 - 1.0);
}

Vec sample_ball(std::mt19937_64& rng, const Vec& center, double radius) {
  const Eigen::Index d = center.size();
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec dir(d);
  double norm = 0;
  do {
    for (Eigen::Index i = 0; i < d; ++i) dir(i) = z(rng);
    norm = dir.norm();
  } while (norm == 0.0);
  double r = radius * std::pow(u(rng), 1.0 / static_cast<double>(d));
  return center + dir * (r / norm);
}

PerturbationReport verify_assumption7(const FittedModel& model, const CostFunction& cost, const Bounds& bounds,
                                      double goal, Direction dir, const PerturbationOptions& opt) {
  if (!(opt.epsilon > 0) || !(opt.eta > 0)) throw ValidationError("epsilon and eta must be positive");
  if (opt.samples < 1) throw ValidationError("need at least one sample");
  if (opt.extended && opt.grid < 1) throw ValidationError("need at least one grid point");
  if (model.beta.size() != bounds.size() + 1) throw ValidationError("beta has the wrong length");

  PerturbationReport rep;
  rep.seed = opt.seed;
  rep.epsilon = opt.epsilon;
  rep.eta = opt.eta;
  rep.samples = opt.samples;

  if (!opt.extended) {
    rep.centers.push_back(model.beta);
  } else {
    if (model.covariance.rows() != model.beta.size()) throw ValidationError("extended mode needs a covariance");
    Vec se = model.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    if (!(se.maxCoeff() > 0)) throw ValidationError("extended mode needs a nonzero covariance (fit from data)");
    for (int m = 1; m <= opt.grid; ++m) {
      double q = 0.025 + 0.95 * m / (opt.grid + 1.0);
      rep.centers.push_back(model.beta + normal_quantile(q) * se);
    }
  }

  auto solve = [&](const Vec& beta) {
    return min_cost_subject_to_threshold(model_from_beta(beta, model.link), cost, bounds, goal, dir);
  };

  const int M = static_cast<int>(rep.centers.size());
  const int L = opt.samples;
  std::vector<char> center_ok(M, 0);
  rep.solutions.assign(M, Vec());
  for (int m = 0; m < M; ++m) {
    try {
      rep.solutions[m] = solve(rep.centers[m]);
      center_ok[m] = 1;
    } catch (const NumericalError& e) {
      rep.failures.push_back({opt.extended ? m : -1, -1, e.what()});
    }
  }

  std::vector<double> dist(static_cast<std::size_t>(M) * L, 0.0);
  std::vector<std::string> err(dist.size());
  parallel_for(M * L, opt.threads, [&](int i) {
    const int m = i / L;
    if (!center_ok[m]) return;
    auto rng = replicate_engine(opt.seed, static_cast<std::uint64_t>(i));
    Vec beta = sample_ball(rng, rep.centers[m], opt.epsilon);
    try {
      dist[i] = (solve(beta) - rep.solutions[m]).norm();
    } catch (const NumericalError& e) {
      err[i] = e.what();
      dist[i] = std::numeric_limits<double>::quiet_NaN();
    }
  });

  bool ok = rep.failures.empty();
  rep.delta_max.assign(M, std::numeric_limits<double>::quiet_NaN());
  for (int m = 0; m < M; ++m) {
    if (!center_ok[m]) continue;
    double dm = 0;
    for (int l = 0; l < L; ++l) {
      const int i = m * L + l;
      if (!err[i].empty()) {
        rep.failures.push_back({opt.extended ? m : -1, l, err[i]});
        ok = false;
      } else {
        dm = std::max(dm, dist[i]);
      }
    }
    rep.delta_max[m] = dm;
    rep.overall_delta_max = std::max(rep.overall_delta_max, dm);
  }
  rep.pass = ok && rep.overall_delta_max < opt.eta;
  return rep;
}

}  // namespace lago
