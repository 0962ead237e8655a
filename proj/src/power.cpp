#include "lago/power.hpp"

#include <cmath>

#include "lago/distributions.hpp"
#include "lago/errors.hpp"

namespace lago {

namespace {

struct Projected1df {
  double P1, P0;      // projected arm means
  double V;           // unpooled variance of the difference
  double pooled_var;  // pooled variance of the difference
  double c0;          // control outcome under the model
};

double control_outcome(const FittedModel& m) { return m.link.inverse(m.beta(0)); }

Projected1df project_z(double t, const FittedModel& m, const ArmSummary& a) {
  Projected1df r;
  const double N1 = a.N1(), N0 = a.N0();
  if (N1 <= 0 || N0 <= 0) throw DegenerateVarianceError("projection needs both arms");
  r.c0 = control_outcome(m);
  r.P1 = (a.s1_obs + a.n1_fut * t) / N1;
  r.P0 = (a.s0_obs + a.n0_fut * r.c0) / N0;
  r.V = r.P1 * (1 - r.P1) / N1 + r.P0 * (1 - r.P0) / N0;
  double pp = (a.s1_obs + a.n1_fut * t + a.s0_obs + a.n0_fut * r.c0) / (N1 + N0);
  r.pooled_var = pp * (1 - pp) * (1 / N1 + 1 / N0);
  if (!(r.V > 0) || !(r.pooled_var > 0)) throw DegenerateVarianceError("projected two-proportion variance is zero");
  return r;
}

Projected1df project_t(double t, const FittedModel& m, const ArmSummary& a) {
  Projected1df r;
  const double N1 = a.N1(), N0 = a.N0();
  if (N1 <= 2 || N0 <= 1) throw DegenerateVarianceError("projection needs N1 > 2 and N0 > 1");
  r.c0 = control_outcome(m);
  r.P1 = (a.s1_obs + a.n1_fut * t) / N1;
  r.P0 = (a.s0_obs + a.n0_fut * r.c0) / N0;
  double dev = t - a.mean1_obs;
  double var1 = ((N1 - 2) * a.var1_obs + a.n1_obs * a.n1_fut / N1 * dev * dev) / (N1 - 1);
  r.V = var1 / N1 + a.var0_obs / N0;
  double s2 = ((N1 - 1) * var1 + (N0 - 1) * a.var0_obs) / (N1 + N0 - 2);
  r.pooled_var = s2 * (1 / N1 + 1 / N0);
  if (!(r.V > 0) || !(r.pooled_var > 0)) throw DegenerateVarianceError("projected two-mean variance is zero");
  return r;
}

Projected1df project(double t, const FittedModel& m, const ArmSummary& a, TestKind test) {
  return is_binary_test(test) ? project_z(t, m, a) : project_t(t, m, a);
}

bool pooled(TestKind t) { return t == TestKind::z_pooled || t == TestKind::t_pooled; }

Vec row_of(const VecRef& x) {
  Vec r(x.size() + 1);
  r(0) = 1.0;
  r.tail(x.size()) = x;
  return r;
}

double wald_from_cov(const Vec& beta, const Mat& cov) {
  const Eigen::Index P = beta.size() - 1;
  Mat block = cov.bottomRightCorner(P, P);
  Eigen::FullPivLU<Mat> lu(block);
  if (!lu.isInvertible()) throw SingularCovarianceError("covariance block for the effects is singular");
  Vec b1 = beta.tail(P);
  return b1.dot(lu.solve(b1));
}

}  // namespace

std::string to_string(TestKind t) {
  switch (t) {
    case TestKind::z_unpooled: return "z_unpooled";
    case TestKind::z_pooled: return "z_pooled";
    case TestKind::t_unpooled: return "t_unpooled";
    case TestKind::t_pooled: return "t_pooled";
    case TestKind::wald_binary: return "wald_pdf_binary";
    case TestKind::wald_continuous: return "wald_pdf_continuous";
  }
  return "?";
}

std::string to_string(Approach a) { return a == Approach::unconditional ? "unconditional" : "conditional"; }
std::string to_string(Direction d) { return d == Direction::increase ? "increase" : "decrease"; }
std::string to_string(ConditionalScale s) { return s == ConditionalScale::sd ? "sd" : "variance"; }

TestKind test_from_string(const std::string& s) {
  if (s == "z_unpooled" || s == "z") return TestKind::z_unpooled;
  if (s == "z_pooled") return TestKind::z_pooled;
  if (s == "t_unpooled" || s == "t") return TestKind::t_unpooled;
  if (s == "t_pooled") return TestKind::t_pooled;
  if (s == "wald_pdf_binary" || s == "wald_binary") return TestKind::wald_binary;
  if (s == "wald_pdf_continuous" || s == "wald_continuous") return TestKind::wald_continuous;
  throw ValidationError("unknown test '" + s + "'");
}

Approach approach_from_string(const std::string& s) {
  if (s == "unconditional" || s == "U" || s == "u") return Approach::unconditional;
  if (s == "conditional" || s == "C" || s == "c") return Approach::conditional;
  throw ValidationError("unknown power approach '" + s + "'");
}

Direction direction_from_string(const std::string& s) {
  if (s == "increase") return Direction::increase;
  if (s == "decrease") return Direction::decrease;
  throw ValidationError("unknown direction '" + s + "'");
}

ConditionalScale conditional_scale_from_string(const std::string& s) {
  if (s == "sd") return ConditionalScale::sd;
  if (s == "variance") return ConditionalScale::variance;
  throw ValidationError("unknown conditional scale '" + s + "'");
}

bool is_wald(TestKind t) { return t == TestKind::wald_binary || t == TestKind::wald_continuous; }

bool is_binary_test(TestKind t) {
  return t == TestKind::z_unpooled || t == TestKind::z_pooled || t == TestKind::wald_binary;
}

ArmSummary summarize(const std::vector<Center>& observed, const std::vector<PlannedCenter>& future) {
  ArmSummary a;
  double ss1 = 0, ss0 = 0;
  for (const auto& c : observed) {
    if (c.arm == Arm::intervention) {
      a.n1_obs += c.n;
      a.s1_obs += c.sum;
      ss1 += c.sumsq;
    } else {
      a.n0_obs += c.n;
      a.s0_obs += c.sum;
      ss0 += c.sumsq;
    }
  }
  for (const auto& f : future) (f.arm == Arm::intervention ? a.n1_fut : a.n0_fut) += f.n;
  if (a.n1_obs > 0) a.mean1_obs = a.s1_obs / a.n1_obs;
  if (a.n0_obs > 0) a.mean0_obs = a.s0_obs / a.n0_obs;
  if (a.n1_obs > 1) a.var1_obs = (ss1 - a.n1_obs * a.mean1_obs * a.mean1_obs) / (a.n1_obs - 1);
  if (a.n0_obs > 1) a.var0_obs = (ss0 - a.n0_obs * a.mean0_obs * a.mean0_obs) / (a.n0_obs - 1);
  return a;
}

Projection make_projection(std::vector<Center> observed, std::vector<PlannedCenter> future) {
  Projection pr;
  pr.arms = summarize(observed, future);
  pr.observed = std::move(observed);
  pr.future = std::move(future);
  return pr;
}

Projection make_projection(const ArmSummary& arms) {
  Projection pr;
  pr.arms = arms;
  return pr;
}

int future_intervention_centers(const Projection& pr) {
  int k = 0;
  for (const auto& f : pr.future)
    if (f.arm == Arm::intervention) ++k;
  return k;
}

double z_statistic(const ArmSummary& s, bool pooled_var) {
  const double n1 = s.N1(), n0 = s.N0();
  if (n1 <= 0 || n0 <= 0) throw DegenerateVarianceError("z statistic needs both arms");
  const double p1 = s.s1_obs / n1, p0 = s.s0_obs / n0;
  double v;
  if (pooled_var) {
    double pp = (s.s1_obs + s.s0_obs) / (n1 + n0);
    v = pp * (1 - pp) * (1 / n1 + 1 / n0);
  } else {
    v = p1 * (1 - p1) / n1 + p0 * (1 - p0) / n0;
  }
  if (!(v > 0)) throw DegenerateVarianceError("all outcomes identical; z statistic undefined");
  return (p1 - p0) / std::sqrt(v);
}

double t_statistic(const ArmSummary& s, bool pooled_var) {
  const double n1 = s.n1_obs, n0 = s.n0_obs;
  if (n1 < 2 || n0 < 2) throw DegenerateVarianceError("t statistic needs two observations per arm");
  double v;
  if (pooled_var) {
    double s2 = ((n1 - 1) * s.var1_obs + (n0 - 1) * s.var0_obs) / (n1 + n0 - 2);
    v = s2 * (1 / n1 + 1 / n0);
  } else {
    v = s.var1_obs / n1 + s.var0_obs / n0;
  }
  if (!(v > 0)) throw DegenerateVarianceError("zero variance; t statistic undefined");
  return (s.mean1_obs - s.mean0_obs) / std::sqrt(v);
}

double wald_statistic(const Vec& beta1, const Mat& sigma_b1, double n) {
  Eigen::FullPivLU<Mat> lu(sigma_b1);
  if (!lu.isInvertible()) throw SingularCovarianceError("covariance block for the effects is singular");
  return n * beta1.dot(lu.solve(beta1));
}

double wald_statistic(const FittedModel& model) {
  const Eigen::Index P = model.components();
  const double n = model.n_used;
  return wald_statistic(model.beta.tail(P), n * model.covariance.bottomRightCorner(P, P), n);
}

LambdaResult unconditional_lambda_at(double t, const FittedModel& model, const Projection& pr, TestKind test,
                                     Direction dir) {
  if (is_wald(test)) throw ValidationError("Wald noncentrality depends on the full package, not only its outcome");
  auto q = project(t, model, pr.arms, test);
  LambdaResult r;
  const double d = q.P1 - q.P0;
  r.lambda = d * d / q.V;
  r.crit_scale = pooled(test) ? q.pooled_var / q.V : 1.0;
  r.drift = direction_sign(dir) * d;
  return r;
}

LambdaResult unconditional_lambda(const VecRef& x, const FittedModel& model, const Projection& pr, TestKind test,
                                  Direction dir) {
  if (is_wald(test)) {
    std::vector<Vec> xs(static_cast<std::size_t>(future_intervention_centers(pr)), Vec(x));
    return unconditional_lambda_centers(xs, model, pr, test);
  }
  return unconditional_lambda_at(predict(model, x), model, pr, test, dir);
}

LambdaResult unconditional_lambda_centers(const std::vector<Vec>& xs, const FittedModel& model, const Projection& pr,
                                          TestKind test) {
  if (!is_wald(test)) throw ValidationError("per-center packages only apply to Wald tests");
  const Eigen::Index k = model.beta.size();
  const Eigen::Index P = k - 1;
  const Vec& beta = model.beta;
  const Vec zero = Vec::Zero(P);
  Mat cov;

  if (test == TestKind::wald_binary) {
    Mat info = Mat::Zero(k, k);
    auto add = [&](const Vec& row, double n) {
      double p = expit(row.dot(beta));
      info.noalias() += n * p * (1 - p) * row * row.transpose();
    };
    for (const auto& c : pr.observed)
      if (c.n > 0) add(row_of(c.a), c.n);
    std::size_t next = 0;
    for (const auto& f : pr.future) {
      if (f.arm == Arm::intervention) {
        if (next >= xs.size()) throw ValidationError("fewer packages than future intervention centers");
        add(row_of(xs[next++]), f.n);
      } else {
        add(row_of(zero), f.n);
      }
    }
    Eigen::FullPivLU<Mat> lu(info);
    if (!lu.isInvertible()) throw SingularCovarianceError("projected information matrix is singular");
    cov = lu.inverse();
  } else {
    const Link& link = model.link;
    Mat bread = Mat::Zero(k, k), meat = Mat::Zero(k, k);
    auto grad = [&](const Vec& row) { return Vec(link.d_inverse(row.dot(beta)) * row); };
    for (const auto& c : pr.observed) {
      if (c.n == 0) continue;
      Vec row = row_of(c.a);
      Vec D = grad(row);
      bread.noalias() += c.n * D * D.transpose();
      meat.noalias() += c.ss_about(link.inverse(row.dot(beta))) * D * D.transpose();
    }
    std::size_t next = 0;
    for (const auto& f : pr.future) {
      Vec row;
      double var;
      if (f.arm == Arm::intervention) {
        if (next >= xs.size()) throw ValidationError("fewer packages than future intervention centers");
        row = row_of(xs[next++]);
        var = pr.arms.var1_obs;
      } else {
        row = row_of(zero);
        var = pr.arms.var0_obs;
      }
      Vec D = grad(row);
      bread.noalias() += f.n * D * D.transpose();
      meat.noalias() += f.n * var * D * D.transpose();
    }
    Eigen::FullPivLU<Mat> lu(bread);
    if (!lu.isInvertible()) throw SingularCovarianceError("projected bread matrix is singular");
    Mat binv = lu.inverse();
    cov = binv * meat * binv;
  }
  LambdaResult r;
  r.lambda = wald_from_cov(beta, cov);
  r.crit_scale = 1.0;
  r.drift = 1.0;
  return r;
}

SlackParts conditional_slack_parts_at(double t, const FittedModel& model, const Projection& pr, TestKind test,
                                      double alpha, double pi, Direction dir, ConditionalScale scale) {
  if (is_wald(test)) throw ValidationError("the conditional approach is defined for 1-df tests only");
  const auto& a = pr.arms;
  auto q = project(t, model, a, test);
  const double N1 = a.N1(), N0 = a.N0();
  const double s = direction_sign(dir);
  const double z_half = normal_quantile(1 - alpha / 2);
  const double z_pi = normal_quantile(1 - pi);

  double var_future;
  if (is_binary_test(test))
    var_future = a.n0_fut / (N0 * N0) * q.c0 * (1 - q.c0) + a.n1_fut / (N1 * N1) * t * (1 - t);
  else
    var_future = a.n1_fut * a.var1_obs / (N1 * N1) + a.n0_fut * a.var0_obs / (N0 * N0);

  SlackParts out;
  out.sigma = std::sqrt(var_future);
  out.crit_term = z_half * std::sqrt(pooled(test) ? q.pooled_var : q.V);
  const double observed = s * (a.s1_obs / N1 - a.s0_obs / N0);
  const double delta = s * (a.n1_fut * t / N1 - a.n0_fut * q.c0 / N0);
  const double spread = scale == ConditionalScale::sd ? out.sigma : var_future;
  out.slack = out.crit_term - observed - delta - z_pi * spread;
  return out;
}

double conditional_constraint_slack_at(double t, const FittedModel& model, const Projection& pr, TestKind test,
                                       double alpha, double pi, Direction dir, ConditionalScale scale) {
  return conditional_slack_parts_at(t, model, pr, test, alpha, pi, dir, scale).slack;
}

double conditional_constraint_slack(const VecRef& x, const FittedModel& model, const Projection& pr, TestKind test,
                                    double alpha, double pi, Direction dir, ConditionalScale scale) {
  return conditional_constraint_slack_at(predict(model, x), model, pr, test, alpha, pi, dir, scale);
}

double unconditional_power(const LambdaResult& r, double alpha, double df) {
  return 1.0 - noncentral_chisq_cdf(chisq_critical(alpha, df) * r.crit_scale, df, r.lambda);
}

double conditional_power_at(double t, const FittedModel& model, const Projection& pr, TestKind test, double alpha,
                            Direction dir) {
  // With pi = 0.5 the z_pi term vanishes and slack is crit - drift.
  auto parts = conditional_slack_parts_at(t, model, pr, test, alpha, 0.5, dir, ConditionalScale::sd);
  if (parts.sigma <= 0) return parts.slack <= 0 ? 1.0 : 0.0;
  return normal_sf(parts.slack / parts.sigma);
}

FinalTestResult final_test(const std::vector<Center>& data, TestKind test, double alpha, const Link& link) {
  FinalTestResult r;
  if (is_wald(test)) {
    FittedModel m = test == TestKind::wald_binary ? fit_binary(data) : fit_continuous(data, link);
    r.df = static_cast<int>(m.components());
    r.statistic = wald_statistic(m);
    r.p_value = chisq_sf(r.statistic, r.df);
    r.reject = r.statistic > chisq_critical(alpha, r.df);
    return r;
  }
  ArmSummary a = summarize(data, {});
  const bool pv = pooled(test);
  r.statistic = is_binary_test(test) ? z_statistic(a, pv) : t_statistic(a, pv);
  r.p_value = 2.0 * normal_sf(std::fabs(r.statistic));
  r.reject = std::fabs(r.statistic) > normal_quantile(1 - alpha / 2);
  return r;
}

}  // namespace lago
