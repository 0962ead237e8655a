#ifndef LAGO_MODEL_HPP
#define LAGO_MODEL_HPP

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace lago {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecRef = Eigen::Ref<const Eigen::VectorXd>;

enum class Arm { control, intervention };

std::string to_string(Arm arm);
Arm arm_from_string(const std::string& s);

struct Bounds {
  Vec lower;
  Vec upper;

  Eigen::Index size() const { return lower.size(); }
  // Throws ValidationError unless sizes match and lower < upper.
  void validate() const;
  bool contains(const VecRef& x, double tol = 1e-9) const;
  Vec clamp(const VecRef& x) const;
};

// One center's delivered package and its outcome sufficient statistics.
// Control centers carry the zero package.
struct Center {
  Arm arm = Arm::control;
  Vec a;
  int n = 0;
  double sum = 0.0;
  double sumsq = 0.0;

  static Center from_outcomes(Arm arm, Vec a, const std::vector<double>& y);
  static Center binary(Arm arm, Vec a, int n, int successes);

  double mean() const { return n > 0 ? sum / n : 0.0; }
  // Sum of squared deviations of the outcomes about m.
  double ss_about(double m) const { return sumsq - 2.0 * m * sum + n * m * m; }
};

struct StageRecord {
  int stage = 1;
  std::vector<Center> centers;

  int n1() const;
  int n0() const;
  double s1() const;
  double s0() const;
};

double expit(double eta);
double logit(double p);

enum class LinkKind { logit, identity, tabulated };

// Inverse link g^{-1} with its derivative. The tabulated kind interpolates
// user-supplied (eta, mu) knots with a monotone cubic Hermite spline and
// extends linearly past the end knots.
class Link {
 public:
  static Link logit();
  static Link identity();
  static Link tabulated(std::vector<double> eta, std::vector<double> mu);

  LinkKind kind() const { return kind_; }
  std::string name() const;
  double inverse(double eta) const;
  double d_inverse(double eta) const;
  // g itself; used to turn an outcome threshold into a linear-predictor one.
  double link(double mu) const;

  const std::vector<double>& knots_eta() const { return eta_; }
  const std::vector<double>& knots_mu() const { return mu_; }

 private:
  LinkKind kind_ = LinkKind::logit;
  std::vector<double> eta_, mu_, slope_;
};

struct FittedModel {
  Vec beta;  // (beta0, beta1_1 .. beta1_P)
  Link link = Link::logit();
  Mat covariance;  // covariance of beta-hat (not scaled by n)
  int n_used = 0;

  Eigen::Index components() const { return beta.size() - 1; }
  double intercept() const { return beta(0); }
  auto effects() const { return beta.tail(beta.size() - 1); }
};

// Model with known coefficients and no covariance, such as pre-trial
// guesses or the true parameters of a simulation.
FittedModel model_from_beta(Vec beta, Link link = Link::logit());

double linear_predictor(const Vec& beta, const VecRef& x);
double predict(const FittedModel& model, const VecRef& x);

// All centers of the given stages, flattened in order.
std::vector<Center> pooled_centers(const std::vector<StageRecord>& stages);

FittedModel fit_binary(const std::vector<StageRecord>& data);
FittedModel fit_binary(const std::vector<Center>& centers);

FittedModel fit_continuous(const std::vector<StageRecord>& data, const Link& link);
FittedModel fit_continuous(const std::vector<Center>& centers, const Link& link);

// Sandwich covariance of beta-hat for a Gaussian-error GLM evaluated at beta.
Mat sandwich_covariance(const std::vector<Center>& centers, const Vec& beta, const Link& link);

// Inverse Fisher information of the grouped logistic likelihood at beta.
Mat logistic_covariance(const std::vector<Center>& centers, const Vec& beta);

// Subject-level robust covariance for the logistic fit.
Mat logistic_sandwich_covariance(const std::vector<Center>& centers, const Vec& beta);

}  // namespace lago

#endif
