#include "lago/distributions.hpp"

#include <cmath>
#include <limits>

#include "lago/errors.hpp"

namespace lago {

namespace {

constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;

double gamma_series(double a, double x) {
  // P(a, x) by the power series; converges fast for x < a + 1.
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 100000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

double gamma_cont_frac(double a, double x) {
  // Q(a, x) by the modified Lentz continued fraction; for x >= a + 1.
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 100000; ++i) {
    double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_sf(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw ValidationError("normal_quantile: p must lie in [0, 1]");
  }
  // AS241 (PPND16), Wichura 1988.
  double q = p - 0.5;
  if (std::fabs(q) <= 0.425) {
    double r = 0.180625 - q * q;
    return q *
           (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
                 67265.770927008700853) * r + 45921.953931549871457) * r +
               13731.693765509461125) * r + 1971.5909503065514427) * r +
             133.14166789178437745) * r + 3.387132872796366608) /
           (((((((5226.495278852545925 * r + 28729.085735721942674) * r +
                 39307.89580009271061) * r + 21213.794301586595867) * r +
               5394.1960214247511077) * r + 687.1870074920579083) * r +
             42.313330701600911252) * r + 1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
                0.24178072517745061177) * r + 1.27045825245236838258) * r +
              3.64784832476320460504) * r + 5.7694972214606914055) * r +
            4.6303378461565452959) * r + 1.42343711074968357734) /
          (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
                0.0151986665636164571966) * r + 0.14810397642748007459) * r +
              0.68976733498510000455) * r + 1.6763848301838038494) * r +
            2.05319162663775882187) * r + 1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                0.0012426609473880784386) * r + 0.026532189526576123093) * r +
              0.29656057182850489123) * r + 1.7848265399172913358) * r +
            5.4637849111641143699) * r + 6.6579046435011037772) /
          (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
                1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
              0.0148753612908506148525) * r + 0.13692988092273580531) * r +
            0.59983220655588793769) * r + 1.0);
  }
  return q < 0.0 ? -val : val;
}

double gamma_p(double a, double x) {
  if (x <= 0.0) return 0.0;
  if (x < a + 1.0) return gamma_series(a, x);
  return 1.0 - gamma_cont_frac(a, x);
}

double gamma_q(double a, double x) {
  if (x <= 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_series(a, x);
  return gamma_cont_frac(a, x);
}

double chisq_cdf(double x, double df) { return gamma_p(0.5 * df, 0.5 * x); }

double chisq_sf(double x, double df) { return gamma_q(0.5 * df, 0.5 * x); }

double chisq_critical(double alpha, double df) {
  if (!(alpha > 0.0 && alpha < 1.0) || !(df > 0.0))
    throw ValidationError("chisq_critical: need alpha in (0,1) and df > 0");
  double lo = 0.0;
  double hi = df + 10.0;
  while (chisq_sf(hi, df) > alpha) hi *= 2.0;
  for (int i = 0; i < 200 && hi - lo > 1e-14 * hi; ++i) {
    double mid = 0.5 * (lo + hi);
    if (chisq_sf(mid, df) > alpha)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

double noncentral_chisq_cdf(double x, double df, double lambda) {
  if (!std::isfinite(x) || !std::isfinite(df) || !std::isfinite(lambda))
    throw ValidationError("noncentral_chisq_cdf: non-finite argument");
  if (x <= 0.0) return 0.0;
  if (lambda <= 0.0) return chisq_cdf(x, df);

  const double mu = 0.5 * lambda;
  const double y = 0.5 * x;
  const double a0 = 0.5 * df;
  const long mode = static_cast<long>(std::floor(mu));

  // Poisson weight and central CDF at the mode, then recur both ways.
  // P(a+1, y) = P(a, y) - y^a e^-y / Gamma(a+1).
  const double w_mode = std::exp(-mu + mode * std::log(mu) - std::lgamma(mode + 1.0));
  const double a_mode = a0 + mode;
  const double p_mode = gamma_p(a_mode, y);
  const double t_mode = std::exp(a_mode * std::log(y) - y - std::lgamma(a_mode + 1.0));

  double total = w_mode * p_mode;
  double mass = w_mode;

  // upward
  double w = w_mode, p = p_mode, t = t_mode;
  for (long j = mode + 1; 1.0 - mass >= 1e-14 && j < mode + 100000; ++j) {
    w *= mu / j;
    p -= t;
    if (p < 0.0) p = 0.0;
    t *= y / (a0 + j);
    total += w * p;
    mass += w;
    if (w < 1e-300 && j > mode + 10) break;
  }
  // downward
  w = w_mode;
  p = p_mode;
  t = t_mode;
  for (long j = mode - 1; j >= 0 && 1.0 - mass >= 1e-14; --j) {
    w *= (j + 1) / mu;
    // t currently holds y^(a0+j+1) e^-y / Gamma(a0+j+2); step down one.
    t *= (a0 + j + 1.0) / y;
    p += t;
    if (p > 1.0) p = 1.0;
    total += w * p;
    mass += w;
  }
  if (total > 1.0) total = 1.0;
  return total;
}

double lambda_min(double alpha, double pi, double df) {
  if (!(alpha > 0.0 && alpha < 1.0) || !(pi > 0.0 && pi < 1.0))
    throw ValidationError("lambda_min: alpha and pi must lie in (0,1)");
  if (pi <= alpha) return 0.0;
  const double crit = chisq_critical(alpha, df);
  auto power = [&](double lam) { return 1.0 - noncentral_chisq_cdf(crit, df, lam); };
  double lo = 0.0, hi = 200.0;
  if (power(hi) < pi) throw NumericalError("lambda_min: power goal unreachable with lambda <= 200");
  while (hi - lo > 1e-8) {
    double mid = 0.5 * (lo + hi);
    if (power(mid) < pi)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace lago
