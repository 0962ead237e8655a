#include "lago/model.hpp"

#include <algorithm>
#include <cmath>

#include "lago/errors.hpp"

namespace lago {

namespace {

constexpr int kMaxIter = 100;
constexpr double kGradTol = 1e-8;
constexpr double kMaxCoef = 30.0;

Vec design_row(const Center& c) {
  Vec row(c.a.size() + 1);
  row(0) = 1.0;
  row.tail(c.a.size()) = c.a;
  return row;
}

Mat design_matrix(const std::vector<Center>& centers) {
  const Eigen::Index p = centers.front().a.size() + 1;
  Mat X(static_cast<Eigen::Index>(centers.size()), p);
  for (std::size_t j = 0; j < centers.size(); ++j) X.row(j) = design_row(centers[j]).transpose();
  return X;
}

std::vector<Center> nonempty(const std::vector<Center>& centers) {
  std::vector<Center> out;
  for (const auto& c : centers)
    if (c.n > 0) out.push_back(c);
  if (out.empty()) throw ValidationError("no observations to fit");
  const auto p = out.front().a.size();
  for (const auto& c : out)
    if (c.a.size() != p) throw ValidationError("inconsistent package length across centers");
  return out;
}

void check_rank(const Mat& X, const Vec& n) {
  Mat Xw = n.cwiseSqrt().asDiagonal() * X;
  Eigen::ColPivHouseholderQR<Mat> qr(Xw);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols()) throw RankDeficientError("design matrix (1, a) is not of full column rank");
}

void check_separation(const Vec& beta) {
  if (!beta.allFinite()) throw SeparationError("coefficients diverged");
  if (beta.cwiseAbs().maxCoeff() > kMaxCoef)
    throw SeparationError("coefficient magnitude exceeded 30; data look separated");
}

double logistic_loglik(const Mat& X, const Vec& n, const Vec& s, const Vec& beta) {
  Vec eta = X * beta;
  double ll = 0.0;
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    // log(1 + e^eta) without overflow
    double e = eta(j);
    double log1pexp = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    ll += s(j) * e - n(j) * log1pexp;
  }
  return ll;
}

}  // namespace

std::string to_string(Arm arm) { return arm == Arm::control ? "control" : "intervention"; }

Arm arm_from_string(const std::string& s) {
  if (s == "control" || s == "0") return Arm::control;
  if (s == "intervention" || s == "1") return Arm::intervention;
  throw ValidationError("unknown arm '" + s + "'");
}

void Bounds::validate() const {
  if (lower.size() == 0 || lower.size() != upper.size())
    throw ValidationError("bounds: lower and upper must have the same positive length");
  for (Eigen::Index p = 0; p < lower.size(); ++p)
    if (!(lower(p) < upper(p))) throw ValidationError("bounds: need lower < upper for every component");
}

bool Bounds::contains(const VecRef& x, double tol) const {
  if (x.size() != lower.size()) return false;
  return ((x - lower).array() >= -tol).all() && ((upper - x).array() >= -tol).all();
}

Vec Bounds::clamp(const VecRef& x) const { return x.cwiseMax(lower).cwiseMin(upper); }

Center Center::from_outcomes(Arm arm, Vec a, const std::vector<double>& y) {
  Center c;
  c.arm = arm;
  c.a = std::move(a);
  c.n = static_cast<int>(y.size());
  for (double v : y) {
    if (!std::isfinite(v)) throw ValidationError("non-finite outcome");
    c.sum += v;
    c.sumsq += v * v;
  }
  return c;
}

Center Center::binary(Arm arm, Vec a, int n, int successes) {
  if (n < 0 || successes < 0 || successes > n) throw ValidationError("binary center: need 0 <= successes <= n");
  Center c;
  c.arm = arm;
  c.a = std::move(a);
  c.n = n;
  c.sum = successes;
  c.sumsq = successes;
  return c;
}

int StageRecord::n1() const {
  int t = 0;
  for (const auto& c : centers)
    if (c.arm == Arm::intervention) t += c.n;
  return t;
}

int StageRecord::n0() const {
  int t = 0;
  for (const auto& c : centers)
    if (c.arm == Arm::control) t += c.n;
  return t;
}

double StageRecord::s1() const {
  double t = 0;
  for (const auto& c : centers)
    if (c.arm == Arm::intervention) t += c.sum;
  return t;
}

double StageRecord::s0() const {
  double t = 0;
  for (const auto& c : centers)
    if (c.arm == Arm::control) t += c.sum;
  return t;
}

double expit(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  double e = std::exp(eta);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

Link Link::logit() {
  Link l;
  l.kind_ = LinkKind::logit;
  return l;
}

Link Link::identity() {
  Link l;
  l.kind_ = LinkKind::identity;
  return l;
}

Link Link::tabulated(std::vector<double> eta, std::vector<double> mu) {
  if (eta.size() < 2 || eta.size() != mu.size())
    throw ValidationError("tabulated link: need at least two (eta, mu) knots");
  for (std::size_t i = 1; i < eta.size(); ++i)
    if (!(eta[i] > eta[i - 1]) || !(mu[i] > mu[i - 1]))
      throw ValidationError("tabulated link: knots must be strictly increasing in eta and mu");
  Link l;
  l.kind_ = LinkKind::tabulated;
  l.eta_ = std::move(eta);
  l.mu_ = std::move(mu);

  // Fritsch-Carlson slopes keep the interpolant monotone.
  const std::size_t k = l.eta_.size();
  std::vector<double> d(k - 1);
  for (std::size_t i = 0; i + 1 < k; ++i) d[i] = (l.mu_[i + 1] - l.mu_[i]) / (l.eta_[i + 1] - l.eta_[i]);
  l.slope_.assign(k, 0.0);
  l.slope_[0] = d[0];
  l.slope_[k - 1] = d[k - 2];
  for (std::size_t i = 1; i + 1 < k; ++i) l.slope_[i] = 0.5 * (d[i - 1] + d[i]);
  for (std::size_t i = 0; i + 1 < k; ++i) {
    double a = l.slope_[i] / d[i], b = l.slope_[i + 1] / d[i];
    double r = a * a + b * b;
    if (r > 9.0) {
      double t = 3.0 / std::sqrt(r);
      l.slope_[i] = t * a * d[i];
      l.slope_[i + 1] = t * b * d[i];
    }
  }
  return l;
}

std::string Link::name() const {
  switch (kind_) {
    case LinkKind::logit: return "logit";
    case LinkKind::identity: return "identity";
    case LinkKind::tabulated: return "tabulated";
  }
  return "?";
}

double Link::inverse(double eta) const {
  switch (kind_) {
    case LinkKind::logit: return expit(eta);
    case LinkKind::identity: return eta;
    case LinkKind::tabulated: {
      const std::size_t k = eta_.size();
      if (eta <= eta_[0]) return mu_[0] + slope_[0] * (eta - eta_[0]);
      if (eta >= eta_[k - 1]) return mu_[k - 1] + slope_[k - 1] * (eta - eta_[k - 1]);
      std::size_t i = std::upper_bound(eta_.begin(), eta_.end(), eta) - eta_.begin() - 1;
      double h = eta_[i + 1] - eta_[i];
      double t = (eta - eta_[i]) / h;
      double t2 = t * t, t3 = t2 * t;
      return (2 * t3 - 3 * t2 + 1) * mu_[i] + (t3 - 2 * t2 + t) * h * slope_[i] +
             (-2 * t3 + 3 * t2) * mu_[i + 1] + (t3 - t2) * h * slope_[i + 1];
    }
  }
  return eta;
}

double Link::d_inverse(double eta) const {
  switch (kind_) {
    case LinkKind::logit: {
      double p = expit(eta);
      return p * (1.0 - p);
    }
    case LinkKind::identity: return 1.0;
    case LinkKind::tabulated: {
      const std::size_t k = eta_.size();
      if (eta <= eta_[0]) return slope_[0];
      if (eta >= eta_[k - 1]) return slope_[k - 1];
      std::size_t i = std::upper_bound(eta_.begin(), eta_.end(), eta) - eta_.begin() - 1;
      double h = eta_[i + 1] - eta_[i];
      double t = (eta - eta_[i]) / h;
      double t2 = t * t;
      return ((6 * t2 - 6 * t) * mu_[i] + (3 * t2 - 4 * t + 1) * h * slope_[i] +
              (-6 * t2 + 6 * t) * mu_[i + 1] + (3 * t2 - 2 * t) * h * slope_[i + 1]) /
             h;
    }
  }
  return 1.0;
}

double Link::link(double mu) const {
  switch (kind_) {
    case LinkKind::logit: return lago::logit(mu);
    case LinkKind::identity: return mu;
    case LinkKind::tabulated: {
      double lo = eta_.front(), hi = eta_.back();
      double span = hi - lo;
      while (inverse(lo) > mu) lo -= span;
      while (inverse(hi) < mu) hi += span;
      for (int i = 0; i < 200 && hi - lo > 1e-14 * (1.0 + std::fabs(lo)); ++i) {
        double mid = 0.5 * (lo + hi);
        (inverse(mid) < mu ? lo : hi) = mid;
      }
      return 0.5 * (lo + hi);
    }
  }
  return mu;
}

FittedModel model_from_beta(Vec beta, Link link) {
  FittedModel m;
  const auto k = beta.size();
  m.beta = std::move(beta);
  m.link = std::move(link);
  m.covariance = Mat::Zero(k, k);
  return m;
}

double linear_predictor(const Vec& beta, const VecRef& x) {
  return beta(0) + beta.tail(beta.size() - 1).dot(x);
}

double predict(const FittedModel& model, const VecRef& x) {
  return model.link.inverse(linear_predictor(model.beta, x));
}

std::vector<Center> pooled_centers(const std::vector<StageRecord>& stages) {
  std::vector<Center> out;
  for (const auto& s : stages) out.insert(out.end(), s.centers.begin(), s.centers.end());
  return out;
}

Mat logistic_covariance(const std::vector<Center>& centers, const Vec& beta) {
  const Eigen::Index k = beta.size();
  Mat info = Mat::Zero(k, k);
  for (const auto& c : centers) {
    if (c.n == 0) continue;
    Vec row = design_row(c);
    double p = expit(row.dot(beta));
    info.noalias() += c.n * p * (1.0 - p) * row * row.transpose();
  }
  Eigen::FullPivLU<Mat> lu(info);
  if (!lu.isInvertible()) throw RankDeficientError("Fisher information is singular");
  return lu.inverse();
}

Mat logistic_sandwich_covariance(const std::vector<Center>& centers, const Vec& beta) {
  const Eigen::Index k = beta.size();
  Mat info = Mat::Zero(k, k), meat = Mat::Zero(k, k);
  for (const auto& c : centers) {
    if (c.n == 0) continue;
    Vec row = design_row(c);
    double p = expit(row.dot(beta));
    Mat rr = row * row.transpose();
    info.noalias() += c.n * p * (1.0 - p) * rr;
    meat.noalias() += c.ss_about(p) * rr;
  }
  Eigen::FullPivLU<Mat> lu(info);
  if (!lu.isInvertible()) throw RankDeficientError("Fisher information is singular");
  Mat inv = lu.inverse();
  Mat cov = inv * meat * inv;
  return 0.5 * (cov + cov.transpose());
}

FittedModel fit_binary(const std::vector<StageRecord>& data) { return fit_binary(pooled_centers(data)); }

FittedModel fit_binary(const std::vector<Center>& all) {
  auto centers = nonempty(all);
  Mat X = design_matrix(centers);
  const Eigen::Index J = X.rows(), k = X.cols();
  Vec n(J), s(J);
  for (Eigen::Index j = 0; j < J; ++j) {
    const auto& c = centers[j];
    if (c.sum < 0 || c.sum > c.n || c.sumsq != c.sum)
      throw ValidationError("binary fit: outcomes must be 0/1");
    n(j) = c.n;
    s(j) = c.sum;
  }
  const double total_s = s.sum(), total_n = n.sum();
  if (total_s <= 0 || total_s >= total_n)
    throw SeparationError("binary fit needs at least one success and one failure");
  check_rank(X, n);

  Vec beta = Vec::Zero(k);
  beta(0) = logit(total_s / total_n);
  double ll = logistic_loglik(X, n, s, beta);
  bool converged = false;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    Vec p = (X * beta).unaryExpr([](double e) { return expit(e); });
    Vec score = X.transpose() * (s - n.cwiseProduct(p));
    if (score.norm() < kGradTol) {
      converged = true;
      break;
    }
    Vec w = n.cwiseProduct(p).cwiseProduct((1.0 - p.array()).matrix());
    Mat info = X.transpose() * w.asDiagonal() * X;
    Vec step = info.ldlt().solve(score);
    if (!step.allFinite()) throw SeparationError("IRLS step is not finite");
    double t = 1.0;
    Vec trial = beta + step;
    double ll_trial = logistic_loglik(X, n, s, trial);
    for (int h = 0; h < 40 && !(ll_trial >= ll - 1e-12 * std::fabs(ll)); ++h) {
      t *= 0.5;
      trial = beta + t * step;
      ll_trial = logistic_loglik(X, n, s, trial);
    }
    beta = trial;
    ll = ll_trial;
    check_separation(beta);
  }
  if (!converged) throw SeparationError("IRLS did not converge in 100 iterations");

  FittedModel m;
  m.beta = beta;
  m.link = Link::logit();
  m.covariance = logistic_covariance(centers, beta);
  m.n_used = static_cast<int>(total_n);
  return m;
}

Mat sandwich_covariance(const std::vector<Center>& all, const Vec& beta, const Link& link) {
  const Eigen::Index k = beta.size();
  Mat bread = Mat::Zero(k, k), meat = Mat::Zero(k, k);
  for (const auto& c : all) {
    if (c.n == 0) continue;
    Vec row = design_row(c);
    double eta = row.dot(beta);
    Vec D = link.d_inverse(eta) * row;
    Mat DD = D * D.transpose();
    bread.noalias() += c.n * DD;
    meat.noalias() += c.ss_about(link.inverse(eta)) * DD;
  }
  Eigen::FullPivLU<Mat> lu(bread);
  if (!lu.isInvertible()) throw RankDeficientError("sandwich bread is singular");
  Mat binv = lu.inverse();
  Mat cov = binv * meat * binv;
  return 0.5 * (cov + cov.transpose());
}

FittedModel fit_continuous(const std::vector<StageRecord>& data, const Link& link) {
  return fit_continuous(pooled_centers(data), link);
}

FittedModel fit_continuous(const std::vector<Center>& all, const Link& link) {
  auto centers = nonempty(all);
  Mat X = design_matrix(centers);
  const Eigen::Index J = X.rows(), k = X.cols();
  Vec n(J), s(J);
  for (Eigen::Index j = 0; j < J; ++j) {
    n(j) = centers[j].n;
    s(j) = centers[j].sum;
  }
  check_rank(X, n);

  auto rss = [&](const Vec& b) {
    double t = 0;
    for (Eigen::Index j = 0; j < J; ++j) t += centers[j].ss_about(link.inverse(X.row(j).dot(b)));
    return t;
  };

  Vec beta = Vec::Zero(k);
  beta(0) = link.link(s.sum() / n.sum());
  if (!std::isfinite(beta(0))) beta(0) = 0.0;
  double f = rss(beta);
  bool converged = false;
  for (int iter = 0; iter < kMaxIter; ++iter) {
    Mat A = Mat::Zero(k, k);
    Vec score = Vec::Zero(k);
    for (Eigen::Index j = 0; j < J; ++j) {
      double eta = X.row(j).dot(beta);
      double mu = link.inverse(eta);
      if (!std::isfinite(mu)) throw NonFiniteError("inverse link returned a non-finite value");
      Vec D = link.d_inverse(eta) * X.row(j).transpose();
      score += D * (s(j) - n(j) * mu);
      A.noalias() += n(j) * D * D.transpose();
    }
    if (score.norm() < kGradTol) {
      converged = true;
      break;
    }
    Vec step = A.ldlt().solve(score);
    if (!step.allFinite()) throw NonFiniteError("Gauss-Newton step is not finite");
    double t = 1.0;
    Vec trial = beta + step;
    double f_trial = rss(trial);
    for (int h = 0; h < 40 && !(f_trial <= f + 1e-12 * std::fabs(f)); ++h) {
      t *= 0.5;
      trial = beta + t * step;
      f_trial = rss(trial);
    }
    if (!trial.allFinite()) throw NonFiniteError("coefficients diverged");
    // Near the solution rounding can keep the score just above tolerance;
    // a move at machine precision means we are there.
    if ((trial - beta).norm() <= 1e-14 * (1.0 + beta.norm())) {
      converged = true;
      break;
    }
    beta = trial;
    f = f_trial;
  }
  if (!converged) throw NonFiniteError("estimating equations did not converge in 100 iterations");
  if (!(f > 0.0)) throw DegenerateVarianceError("residual variance is zero");

  FittedModel m;
  m.beta = beta;
  m.link = link;
  m.covariance = sandwich_covariance(centers, beta, link);
  m.n_used = static_cast<int>(n.sum());
  return m;
}

}  // namespace lago
