#include "lago/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lago/distributions.hpp"
#include "lago/errors.hpp"

namespace lago {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// s * (a - b) >= 0 up to rounding
bool at_least(double a, double b, double s) { return s * (a - b) >= -1e-12; }

double best_term(double bp, double lo, double hi) { return std::max(bp * lo, bp * hi); }

// Minimizer of a cubic component cost on [lo, hi]. Ties keep the lower end.
double component_argmin(const CostFunction& c, int p, double lo, double hi) {
  const Mat& k = c.coefficients();
  double best = lo, fbest = c.component_cost(p, lo);
  auto consider = [&](double x) {
    if (!(x > lo && x <= hi)) return;
    double f = c.component_cost(p, x);
    if (f < fbest - 1e-15 * (1 + std::fabs(fbest))) best = x, fbest = f;
  };
  consider(hi);
  // derivative 3a x^2 + 2b x + c
  double a = 3 * k(p, 2), b = 2 * k(p, 1), cc = k(p, 0);
  if (a != 0.0) {
    double disc = b * b - 4 * a * cc;
    if (disc >= 0) {
      double r = std::sqrt(disc);
      consider((-b - r) / (2 * a));
      consider((-b + r) / (2 * a));
    }
  } else if (b != 0.0) {
    consider(-cc / b);
  }
  return best;
}

// Endpoints plus interior local minima of one component's cost.
std::vector<double> component_candidates(const CostFunction& c, int p, double lo, double hi) {
  std::vector<double> out{lo, hi};
  const Mat& k = c.coefficients();
  double a = 3 * k(p, 2), b = 2 * k(p, 1), cc = k(p, 0);
  auto add = [&](double x) {
    if (x > lo && x < hi && c.curvature_at(p, x) > 0) out.push_back(x);
  };
  if (a != 0.0) {
    double disc = b * b - 4 * a * cc;
    if (disc >= 0) {
      double r = std::sqrt(disc);
      add((-b - r) / (2 * a));
      add((-b + r) / (2 * a));
    }
  } else if (b != 0.0) {
    add(-cc / b);
  }
  return out;
}

// Real roots of a u^2 + b u + c inside (lo, hi).
void quadratic_roots_in(double a, double b, double c, double lo, double hi, std::vector<double>& out) {
  const double scale = std::fabs(a) + std::fabs(b) + std::fabs(c);
  if (scale == 0.0) return;
  if (std::fabs(a) <= 1e-14 * scale) {
    if (b != 0.0) {
      double u = -c / b;
      if (u > lo && u < hi) out.push_back(u);
    }
    return;
  }
  double disc = b * b - 4 * a * c;
  if (disc < 0) return;
  double r = std::sqrt(disc);
  double q = -0.5 * (b + std::copysign(r, b));
  for (double u : {q / a, q != 0.0 ? c / q : kInf})
    if (u > lo && u < hi) out.push_back(u);
}

// Exact minimization of u -> C_p(x_p + u) + C_r(x_r - k u) over [ulo, uhi];
// r < 0 moves x_p alone.
double pair_step(const CostFunction& c, const Vec& x, int p, int r, double k, double ulo, double uhi) {
  auto f = [&](double u) {
    double v = c.component_cost(p, x(p) + u);
    if (r >= 0) v += c.component_cost(r, x(r) - k * u);
    return v;
  };
  auto df = [&](double u) {
    double v = c.marginal_at(p, x(p) + u);
    if (r >= 0) v -= k * c.marginal_at(r, x(r) - k * u);
    return v;
  };
  // df is quadratic in u; recover it from three samples
  double dm = df(-1.0), d0 = df(0.0), dp = df(1.0);
  double qa = 0.5 * (dp + dm) - d0, qb = 0.5 * (dp - dm);
  std::vector<double> cand{ulo, uhi};
  quadratic_roots_in(qa, qb, d0, ulo, uhi, cand);
  double best = 0.0, fbest = f(0.0);
  for (double u : cand) {
    double v = f(u);
    if (v < fbest - 1e-14 * (1 + std::fabs(fbest))) best = u, fbest = v;
  }
  return best;
}

// Puts x on b'x = h by moving along b with clamping.
bool project_to_surface(Vec& x, const Bounds& bd, const VecRef& b, double h) {
  auto g = [&](double tau) { return b.dot(bd.clamp(x + tau * b)); };
  double lo = 0.0, hi = 0.0;
  double g0 = g(0.0);
  if (g0 == h) return true;
  double step = 1.0;
  if (g0 < h) {
    while (g(hi) < h) {
      lo = hi;
      hi += step;
      step *= 2;
      if (step > 1e12) return false;
    }
  } else {
    while (g(lo) > h) {
      hi = lo;
      lo -= step;
      step *= 2;
      if (step > 1e12) return false;
    }
  }
  for (int i = 0; i < 200; ++i) {
    double mid = 0.5 * (lo + hi);
    (g(mid) < h ? lo : hi) = mid;
  }
  x = bd.clamp(x + hi * b);
  return true;
}

// Pairwise exchange descent on b'x = h, each exchange solved exactly.
Vec surface_descent(const CostFunction& c, const Bounds& bd, const VecRef& b, Vec x) {
  const int P = static_cast<int>(x.size());
  for (int sweep = 0; sweep < 500; ++sweep) {
    double moved = 0.0;
    for (int p = 0; p < P; ++p) {
      if (b(p) == 0.0) {
        double u = pair_step(c, x, p, -1, 0.0, bd.lower(p) - x(p), bd.upper(p) - x(p));
        x(p) += u;
        moved = std::max(moved, std::fabs(u));
        continue;
      }
      for (int r = 0; r < P; ++r) {
        if (r == p || b(r) == 0.0) continue;
        double k = b(p) / b(r);
        double ulo = bd.lower(p) - x(p), uhi = bd.upper(p) - x(p);
        // x_r - k u within [L_r, U_r]
        double a1 = (x(r) - bd.upper(r)) / k, a2 = (x(r) - bd.lower(r)) / k;
        ulo = std::max(ulo, std::min(a1, a2));
        uhi = std::min(uhi, std::max(a1, a2));
        if (!(uhi > ulo)) continue;
        double u = pair_step(c, x, p, r, k, ulo, uhi);
        if (u == 0.0) continue;
        x(p) += u;
        x(r) -= k * u;
        x(p) = std::clamp(x(p), bd.lower(p), bd.upper(p));
        x(r) = std::clamp(x(r), bd.lower(r), bd.upper(r));
        moved = std::max(moved, std::fabs(u) * std::max(1.0, std::fabs(k)));
      }
    }
    if (moved < 1e-10) break;
  }
  return x;
}

std::vector<Vec> lattice_starts(const Bounds& bd, int count) {
  const int P = static_cast<int>(bd.size());
  int levels = std::max(2, static_cast<int>(std::ceil(std::pow(count, 1.0 / P))));
  long total = 1;
  for (int p = 0; p < P && total <= 1L << 30; ++p) total *= levels;
  std::vector<Vec> out;
  long stride = std::max(1L, total / count);
  for (long idx = 0; idx < total && static_cast<int>(out.size()) < count; idx += stride) {
    Vec x(P);
    long rem = idx;
    for (int p = 0; p < P; ++p) {
      int l = static_cast<int>(rem % levels);
      rem /= levels;
      x(p) = bd.lower(p) + (bd.upper(p) - bd.lower(p)) * l / (levels - 1);
    }
    out.push_back(x);
  }
  return out;
}

// Best box point on the face b'x = max: effective components at their best
// bound, the rest at their own cost minimum.
Vec extreme_package(const CostFunction& c, const Bounds& bd, const VecRef& b) {
  Vec x(b.size());
  for (Eigen::Index p = 0; p < b.size(); ++p) {
    if (b(p) > 0) x(p) = bd.upper(p);
    else if (b(p) < 0) x(p) = bd.lower(p);
    else x(p) = component_argmin(c, static_cast<int>(p), bd.lower(p), bd.upper(p));
  }
  return x;
}

double threshold_to_h(const FittedModel& m, double t, double s) { return s * (m.link.link(t) - m.beta(0)); }

}  // namespace

void GoalSpec::validate(bool binary) const {
  if (!(alpha > 0 && alpha < 1)) throw ValidationError("alpha must lie in (0,1)");
  if (power_goal && !(*power_goal > 0 && *power_goal < 1)) throw ValidationError("power goal must lie in (0,1)");
  if (!outcome_goal && !power_goal) throw ValidationError("need an outcome goal, a power goal or both");
  if (outcome_goal && !std::isfinite(*outcome_goal)) throw ValidationError("outcome goal must be finite");
  if (outcome_goal && binary && !(*outcome_goal > 0 && *outcome_goal < 1))
    throw ValidationError("binary outcome goal must lie in (0,1)");
  if (binary != is_binary_test(test))
    throw ValidationError("test '" + to_string(test) + "' does not match the outcome type");
  if (is_wald(test) && approach == Approach::conditional)
    throw ValidationError("the conditional approach is defined for 1-df tests only");
  if (per_center && !is_wald(test)) throw ValidationError("per-center packages require a Wald test");
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::goal_feasible: return "goal-feasible";
    case Regime::pmax_fallback: return "pmax-fallback";
    case Regime::shrinking_fallback: return "shrinking-fallback";
  }
  return "?";
}

double p_max(const FittedModel& model, const Bounds& bounds, Direction dir) {
  const double s = direction_sign(dir);
  double eta = 0.0;
  for (Eigen::Index p = 0; p < model.components(); ++p)
    eta += best_term(s * model.beta(p + 1), bounds.lower(p), bounds.upper(p));
  return model.link.inverse(model.beta(0) + s * eta);
}

Vec p_max_package(const FittedModel& model, const Bounds& bounds, Direction dir) {
  const double s = direction_sign(dir);
  Vec x = bounds.lower;
  for (Eigen::Index p = 0; p < model.components(); ++p)
    if (s * model.beta(p + 1) > 0) x(p) = bounds.upper(p);
  return x;
}

Vec min_cost_linear(const Vec& c, const Bounds& bd, const VecRef& b, double h) {
  const Eigen::Index P = c.size();
  Vec x(P);
  for (Eigen::Index p = 0; p < P; ++p) {
    if (c(p) > 0) x(p) = bd.lower(p);
    else if (c(p) < 0) x(p) = bd.upper(p);
    else x(p) = b(p) >= 0 ? bd.upper(p) : bd.lower(p);
  }
  double deficit = h - b.dot(x);
  if (deficit <= 0) return x;

  struct Move {
    Eigen::Index p;
    double gain, dcost;
  };
  std::vector<Move> moves;
  for (Eigen::Index p = 0; p < P; ++p) {
    double other = x(p) == bd.lower(p) ? bd.upper(p) : bd.lower(p);
    double gain = b(p) * (other - x(p));
    if (gain > 0) moves.push_back({p, gain, c(p) * (other - x(p))});
  }
  // most outcome per unit cost first; stable keeps lower index on ties
  std::stable_sort(moves.begin(), moves.end(),
                   [](const Move& a, const Move& m) { return a.gain * m.dcost > m.gain * a.dcost; });
  for (const auto& m : moves) {
    double dir = b(m.p) > 0 ? 1.0 : -1.0;
    if (m.gain >= deficit) {
      x(m.p) += dir * deficit / std::fabs(b(m.p));
      x(m.p) = std::clamp(x(m.p), bd.lower(m.p), bd.upper(m.p));
      return x;
    }
    x(m.p) = dir > 0 ? bd.upper(m.p) : bd.lower(m.p);
    deficit -= m.gain;
  }
  if (deficit > 1e-12 * (1 + std::fabs(h))) throw InfeasibleError("threshold not reachable within bounds");
  return x;
}

Vec min_cost_affine(const CostFunction& cost, const Bounds& bd, const VecRef& b, double h) {
  const int P = static_cast<int>(b.size());
  if (cost.components() != P || bd.size() != P) throw ValidationError("dimension mismatch between cost, bounds and model");
  double top = 0.0;
  for (int p = 0; p < P; ++p) top += best_term(b(p), bd.lower(p), bd.upper(p));
  const double tol = 1e-12 * (1 + std::fabs(h) + std::fabs(top));
  if (h > top + tol) throw InfeasibleError("threshold not reachable within bounds");
  if (h >= top - tol) return extreme_package(cost, bd, b);

  if (cost.is_linear()) return min_cost_linear(cost.linear_coefficients(), bd, b, h);

  Vec best;
  double fbest = kInf;
  auto consider = [&](const Vec& x) {
    if (b.dot(x) < h - tol) return;
    double f = cost.evaluate(x);
    if (!std::isfinite(fbest) || f < fbest - 1e-12 * (1 + std::fabs(fbest))) best = x, fbest = f;
  };

  // constraint inactive: products of per-component local minima
  if (P <= 10) {
    std::vector<std::vector<double>> cand(P);
    for (int p = 0; p < P; ++p) cand[p] = component_candidates(cost, p, bd.lower(p), bd.upper(p));
    std::vector<std::size_t> idx(P, 0);
    Vec x(P);
    while (true) {
      for (int p = 0; p < P; ++p) x(p) = cand[p][idx[p]];
      consider(x);
      int p = 0;
      while (p < P && ++idx[p] == cand[p].size()) idx[p++] = 0;
      if (p == P) break;
    }
  }

  // constraint active
  for (Vec x : lattice_starts(bd, 32)) {
    if (!project_to_surface(x, bd, b, h)) continue;
    x = surface_descent(cost, bd, b, x);
    if (b.dot(x) < h) project_to_surface(x, bd, b, h);
    consider(x);
  }
  if (!std::isfinite(fbest)) throw InfeasibleError("no feasible package found");
  return best;
}

Vec min_cost_subject_to_threshold(const FittedModel& model, const CostFunction& cost, const Bounds& bounds,
                                  double threshold, Direction dir) {
  const double s = direction_sign(dir);
  if (!at_least(p_max(model, bounds, dir), threshold, s))
    throw InfeasibleError("outcome threshold exceeds the best achievable outcome");
  Vec b = s * model.beta.tail(model.components());
  return min_cost_affine(cost, bounds, b, threshold_to_h(model, threshold, s));
}

namespace {

bool met_1df(double t, const FittedModel& model, const Projection& pr, const GoalSpec& g, double lmin) {
  const double pi = *g.power_goal;
  if (g.approach == Approach::conditional)
    return conditional_constraint_slack_at(t, model, pr, g.test, g.alpha, pi, g.direction, g.conditional_scale) <= 0;
  auto r = unconditional_lambda_at(t, model, pr, g.test, g.direction);
  if (r.drift <= 0) return false;
  if (r.crit_scale != 1.0) return unconditional_power(r, g.alpha, 1) >= pi;
  return r.lambda >= lmin;
}

// Bisection between an unmet and a met outcome; returns the met side.
template <class F>
double bisect_threshold(double unmet, double met, F&& ok) {
  for (int i = 0; i < 60; ++i) {
    double mid = 0.5 * (unmet + met);
    if (mid == unmet || mid == met) break;
    (ok(mid) ? met : unmet) = mid;
  }
  return met;
}

}  // namespace

bool power_goal_met_at(double t, const FittedModel& model, const Projection& pr, const GoalSpec& goals) {
  if (!goals.power_goal) return true;
  if (is_wald(goals.test)) throw ValidationError("Wald power depends on the package, not only its outcome");
  return met_1df(t, model, pr, goals, lambda_min(goals.alpha, *goals.power_goal, 1));
}

double power_threshold(const FittedModel& model, const Projection& pr, const GoalSpec& goals, const Bounds& bounds,
                       const CostFunction& cost) {
  if (!goals.power_goal) throw ValidationError("no power goal configured");
  const double c0 = model.link.inverse(model.beta(0));
  const double ext = p_max(model, bounds, goals.direction);
  const double s = direction_sign(goals.direction);

  if (is_wald(goals.test)) {
    const double df = static_cast<double>(model.components());
    const double lmin = lambda_min(goals.alpha, *goals.power_goal, df);
    auto ok = [&](double t) {
      Vec x = min_cost_subject_to_threshold(model, cost, bounds, t, goals.direction);
      return unconditional_lambda(x, model, pr, goals.test, goals.direction).lambda >= lmin;
    };
    if (s * (ext - c0) <= 0) {
      if (ok(ext)) return ext;
      throw NoThresholdError("power goal unreachable");
    }
    if (!ok(ext)) throw NoThresholdError("power goal unreachable at the best achievable outcome");
    if (ok(c0)) return c0;
    return bisect_threshold(c0, ext, ok);
  }

  const double lmin = lambda_min(goals.alpha, *goals.power_goal, 1);
  auto ok = [&](double t) { return met_1df(t, model, pr, goals, lmin); };
  if (ok(c0)) return c0;
  if (s * (ext - c0) <= 0 || !ok(ext)) throw NoThresholdError("power goal unreachable at the best achievable outcome");
  return bisect_threshold(c0, ext, ok);
}

double projected_power(const VecRef& x, const FittedModel& model, const Projection& pr, const GoalSpec& goals) {
  if (is_wald(goals.test))
    return unconditional_power(unconditional_lambda(x, model, pr, goals.test, goals.direction), goals.alpha,
                               static_cast<double>(model.components()));
  double t = predict(model, x);
  if (goals.approach == Approach::conditional)
    return conditional_power_at(t, model, pr, goals.test, goals.alpha, goals.direction);
  return unconditional_power(unconditional_lambda_at(t, model, pr, goals.test, goals.direction), goals.alpha, 1);
}

Vec shrinking_method(const FittedModel& model, const Bounds& bounds, const VecRef& stage1_x, double outcome_goal,
                     Direction dir) {
  const double s = direction_sign(dir);
  const Eigen::Index P = model.components();
  Vec b = s * model.beta.tail(P);
  const double H = threshold_to_h(model, outcome_goal, s);
  double total = 0.0;
  for (Eigen::Index q = 0; q < P; ++q) total += best_term(b(q), bounds.lower(q), bounds.upper(q));

  Vec x = stage1_x;
  for (Eigen::Index p = 0; p < P; ++p) {
    const double U = bounds.upper(p);
    if (U <= 0) continue;
    double bmax = (H - (total - best_term(b(p), bounds.lower(p), U))) / U;
    if (!(bmax > 0)) continue;
    double bmin = bmax / 2;
    if (b(p) <= bmin) continue;
    double frac = std::min(1.0, (b(p) - bmin) / (bmax - bmin));
    x(p) = stage1_x(p) + (U - stage1_x(p)) * frac;
  }
  return bounds.clamp(x);
}

namespace {

Recommendation finish(Recommendation r, const FittedModel& model, const Projection* pr, const GoalSpec& goals,
                      const CostFunction& cost) {
  if (r.per_center.empty()) {
    r.achieved_outcome = predict(model, r.x_hat);
    r.cost = cost.evaluate(r.x_hat);
  } else {
    double o = 0, c = 0;
    for (const auto& x : r.per_center) o += predict(model, x), c += cost.evaluate(x);
    r.achieved_outcome = o / r.per_center.size();
    r.cost = c / r.per_center.size();
  }
  if (pr && pr->arms.n1_fut > 0 && pr->arms.n0_fut > 0) {
    try {
      if (!r.per_center.empty())
        r.projected_power = unconditional_power(unconditional_lambda_centers(r.per_center, model, *pr, goals.test),
                                                goals.alpha, static_cast<double>(model.components()));
      else
        r.projected_power = projected_power(r.x_hat, model, *pr, goals);
    } catch (const NumericalError&) {
      r.projected_power.reset();
    }
  }
  return r;
}

}  // namespace

Recommendation recommend(const FittedModel& model, const Projection& pr, const GoalSpec& goals,
                         const CostFunction& cost, const Bounds& bounds, const VecRef& stage1_fallback_x) {
  const double s = direction_sign(goals.direction);
  const double pm = p_max(model, bounds, goals.direction);
  const double goal = goals.outcome_goal.value_or(model.link.inverse(model.beta(0)));

  Recommendation r;
  bool power_unreachable = false;
  double need = goal;
  if (goals.power_goal) {
    try {
      r.power_threshold = power_threshold(model, pr, goals, bounds, cost);
      if (s * (*r.power_threshold - goal) > 0) {
        need = *r.power_threshold;
        r.power_binding = true;
      }
    } catch (const NoThresholdError&) {
      power_unreachable = true;
      r.power_binding = true;
    }
  }

  if (!power_unreachable && at_least(pm, need, s)) {
    r.regime = Regime::goal_feasible;
    r.required_threshold = need;
    r.x_hat = min_cost_subject_to_threshold(model, cost, bounds, need, goals.direction);
    if (goals.per_center && is_wald(goals.test) && goals.power_goal)
      r.per_center = optimize_per_center(model, pr, goals, cost, bounds, r.x_hat, need);
  } else if (at_least(pm, goal, s)) {
    r.regime = Regime::pmax_fallback;
    r.required_threshold = pm;
    r.x_hat = min_cost_subject_to_threshold(model, cost, bounds, pm, goals.direction);
  } else {
    r.regime = Regime::shrinking_fallback;
    r.required_threshold = goal;
    r.x_hat = shrinking_method(model, bounds, stage1_fallback_x, goal, goals.direction);
  }
  return finish(std::move(r), model, &pr, goals, cost);
}

Recommendation recommend_outcome_only(const FittedModel& model, const GoalSpec& goals, const CostFunction& cost,
                                      const Bounds& bounds, const VecRef& fallback_x) {
  const double s = direction_sign(goals.direction);
  if (!goals.outcome_goal) throw ValidationError("the optimal intervention needs an outcome goal");
  const double goal = *goals.outcome_goal;
  Recommendation r;
  r.required_threshold = goal;
  if (at_least(p_max(model, bounds, goals.direction), goal, s)) {
    r.regime = Regime::goal_feasible;
    r.x_hat = min_cost_subject_to_threshold(model, cost, bounds, goal, goals.direction);
  } else {
    r.regime = Regime::shrinking_fallback;
    r.x_hat = shrinking_method(model, bounds, fallback_x, goal, goals.direction);
  }
  return finish(std::move(r), model, nullptr, goals, cost);
}

Recommendation plan_stage1(const FittedModel& beta0, const GoalSpec& goals, const CostFunction& cost,
                           const Bounds& bounds, const std::vector<PlannedCenter>& planned, double assumed_variance) {
  if (goals.power_goal && is_wald(goals.test))
    throw ValidationError("stage-1 planning supports 1-df tests only");
  GoalSpec g = goals;
  g.approach = Approach::unconditional;
  g.per_center = false;

  ArmSummary arms;
  for (const auto& c : planned) (c.arm == Arm::intervention ? arms.n1_fut : arms.n0_fut) += c.n;
  arms.var1_obs = arms.var0_obs = assumed_variance;
  Projection pr = make_projection(arms);
  pr.future = planned;

  const double s = direction_sign(g.direction);
  const double pm = p_max(beta0, bounds, g.direction);
  Recommendation r;
  bool power_unreachable = false;
  const double goal = g.outcome_goal.value_or(beta0.link.inverse(beta0.beta(0)));
  double need = goal;
  if (g.power_goal) {
    try {
      r.power_threshold = power_threshold(beta0, pr, g, bounds, cost);
      if (s * (*r.power_threshold - need) > 0) {
        need = *r.power_threshold;
        r.power_binding = true;
      }
    } catch (const NoThresholdError&) {
      power_unreachable = true;
      r.power_binding = true;
    }
  }
  if (!power_unreachable && at_least(pm, need, s)) {
    r.regime = Regime::goal_feasible;
    r.required_threshold = need;
  } else if (at_least(pm, goal, s)) {
    r.regime = Regime::pmax_fallback;
    r.required_threshold = pm;
  } else {
    throw InfeasibleError("outcome goal not achievable under the pre-trial coefficients");
  }
  r.x_hat = min_cost_subject_to_threshold(beta0, cost, bounds, r.required_threshold, g.direction);
  return finish(std::move(r), beta0, &pr, g, cost);
}

Recommendation recommend_stage_k(const FittedModel& model, const std::vector<StageRecord>& completed,
                                 const std::vector<std::vector<PlannedCenter>>& planned, int k,
                                 const GoalSpec& goals, const CostFunction& cost, const Bounds& bounds,
                                 const VecRef& fallback_x) {
  const int K = static_cast<int>(planned.size());
  if (k < 2 || k > K) throw ValidationError("stage index out of range");
  if (static_cast<int>(completed.size()) < k - 1) throw ValidationError("earlier stages are not complete");
  std::vector<Center> observed;
  for (int l = 0; l < k - 1; ++l)
    observed.insert(observed.end(), completed[l].centers.begin(), completed[l].centers.end());
  std::vector<PlannedCenter> future;
  for (int l = k - 1; l < K; ++l) future.insert(future.end(), planned[l].begin(), planned[l].end());
  return recommend(model, make_projection(std::move(observed), std::move(future)), goals, cost, bounds, fallback_x);
}

std::vector<Vec> optimize_per_center(const FittedModel& model, const Projection& pr, const GoalSpec& goals,
                                     const CostFunction& cost, const Bounds& bounds, const VecRef& start,
                                     double threshold) {
  const int J = future_intervention_centers(pr);
  const int P = static_cast<int>(start.size());
  std::vector<Vec> xs(static_cast<std::size_t>(J), Vec(start));
  if (J < 2 || !goals.power_goal) return xs;
  const double s = direction_sign(goals.direction);
  const double lmin = lambda_min(goals.alpha, *goals.power_goal, P);
  const Vec b = model.beta.tail(P);

  auto mean_gap = [&](const std::vector<Vec>& v) {
    double o = 0;
    for (const auto& x : v) o += predict(model, x);
    return s * (o / J - threshold);
  };
  auto total = [&](const std::vector<Vec>& v) {
    double c = 0;
    for (const auto& x : v) c += cost.evaluate(x);
    return c;
  };
  auto power_ok = [&](const std::vector<Vec>& v) {
    try {
      return unconditional_lambda_centers(v, model, pr, goals.test).lambda >= lmin;
    } catch (const NumericalError&) {
      return false;
    }
  };
  if (mean_gap(xs) < -1e-9 || !power_ok(xs)) return xs;

  // Restores the mean outcome by moving x[i](q); false if out of range.
  auto compensate = [&](std::vector<Vec>& v, int i, int q) {
    double lo = bounds.lower(q), hi = bounds.upper(q);
    auto gap_at = [&](double val) {
      v[i](q) = val;
      return mean_gap(v);
    };
    double glo = gap_at(lo), ghi = gap_at(hi);
    if ((glo < 0) == (ghi < 0)) return false;
    bool up = ghi >= 0;  // gap increases toward hi
    for (int it = 0; it < 80; ++it) {
      double mid = 0.5 * (lo + hi);
      bool ok = gap_at(mid) >= 0;
      (ok == up ? hi : lo) = mid;
    }
    v[i](q) = up ? hi : lo;
    return mean_gap(v) >= -1e-9;
  };

  double best = total(xs);
  for (double frac = 0.25; frac > 1e-5; frac /= 2) {
    for (int sweep = 0; sweep < 50; ++sweep) {
      bool improved = false;
      for (int j = 0; j < J; ++j)
        for (int p = 0; p < P; ++p)
          for (double sign : {-1.0, 1.0}) {
            double step = sign * frac * (bounds.upper(p) - bounds.lower(p));
            double moved = std::clamp(xs[j](p) + step, bounds.lower(p), bounds.upper(p));
            if (moved == xs[j](p)) continue;
            for (int i = 0; i < J && !improved; ++i)
              for (int q = 0; q < P && !improved; ++q) {
                if ((i == j && q == p) || b(q) == 0.0) continue;
                auto cand = xs;
                cand[j](p) = moved;
                if (!compensate(cand, i, q)) continue;
                double f = total(cand);
                if (f < best - 1e-10 * (1 + std::fabs(best)) && power_ok(cand)) {
                  xs = std::move(cand);
                  best = f;
                  improved = true;
                }
              }
            if (improved) break;
          }
      if (!improved) break;
    }
  }
  return xs;
}

Vec integerize(const FittedModel& model, const Bounds& bounds, const VecRef& x, Direction dir) {
  const double s = direction_sign(dir);
  Vec out(x.size());
  for (Eigen::Index p = 0; p < x.size(); ++p) {
    double v = s * model.beta(p + 1) > 0 ? std::ceil(x(p) - 1e-9) : std::floor(x(p) + 1e-9);
    if (v > bounds.upper(p)) v = std::floor(bounds.upper(p));
    if (v < bounds.lower(p)) v = std::ceil(bounds.lower(p));
    out(p) = v;
  }
  return out;
}

}  // namespace lago
