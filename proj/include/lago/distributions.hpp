#ifndef LAGO_DISTRIBUTIONS_HPP
#define LAGO_DISTRIBUTIONS_HPP

namespace lago {

double normal_cdf(double x);
double normal_sf(double x);

// Inverse of normal_cdf (Wichura's AS241, relative error about 1e-16).
double normal_quantile(double p);

// Regularized incomplete gamma functions P(a, x) and Q(a, x) = 1 - P(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

double chisq_cdf(double x, double df);
double chisq_sf(double x, double df);

// Upper-alpha critical value: chisq_sf(c, df) == alpha.
double chisq_critical(double alpha, double df);

/// Noncentral chi-square CDF as a Poisson mixture of central CDFs.
///
/// Terms are summed outward from the Poisson mode until the unvisited
/// Poisson mass drops below 1e-14, so the absolute error is bounded by
/// that mass plus rounding.
double noncentral_chisq_cdf(double x, double df, double lambda);

/// Smallest noncentrality giving power `pi` for a level-`alpha` chi-square
/// test with `df` degrees of freedom. Bisection on [0, 200] to 1e-8.
/// Returns 0 when pi <= alpha.
double lambda_min(double alpha, double pi, double df);

}  // namespace lago

#endif
