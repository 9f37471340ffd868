#include "kdsm/special_functions.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace kdsm::special {

namespace {
constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

double ln_gamma(double x) {
  if (!(x > 0.0)) throw DomainError("ln_gamma: x must be > 0, got " + std::to_string(x));
  return std::lgamma(x);
}

double std_normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

// Acklam's rational initial guess followed by one Halley step against erfc.
double std_normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0))
    throw DomainError("std_normal_quantile: p must be in (0,1), got " + std::to_string(p));

  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};

  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Halley refinement: solve Phi(x) - p = 0.
  for (int it = 0; it < 2; ++it) {
    double e = std_normal_cdf(x) - p;
    double u = e / std_normal_pdf(x);
    x = x - u / (1.0 + 0.5 * x * u);
  }
  return x;
}

namespace {

// Lower incomplete gamma by its power series, x < a+1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 3e-15)
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw NumericError("reg_inc_gamma: series failed to converge");
}

// Upper incomplete gamma by Lentz continued fraction, x >= a+1.
double gamma_q_cf(double a, double x) {
  const double tiny = std::numeric_limits<double>::min() / 1e-30;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    double an = -static_cast<double>(i) * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 3e-15)
      return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw NumericError("reg_inc_gamma: continued fraction failed to converge");
}

}  // namespace

double reg_lower_inc_gamma(double a, double x) {
  if (!(a > 0.0)) throw DomainError("reg_inc_gamma: a must be > 0");
  if (!(x >= 0.0)) throw DomainError("reg_inc_gamma: x must be >= 0");
  if (x == 0.0) return 0.0;
  return (x < a + 1.0) ? gamma_p_series(a, x) : 1.0 - gamma_q_cf(a, x);
}

double reg_upper_inc_gamma(double a, double x) {
  if (!(a > 0.0)) throw DomainError("reg_inc_gamma: a must be > 0");
  if (!(x >= 0.0)) throw DomainError("reg_inc_gamma: x must be >= 0");
  if (x == 0.0) return 1.0;
  return (x < a + 1.0) ? 1.0 - gamma_p_series(a, x) : gamma_q_cf(a, x);
}

namespace {

// Lentz evaluation of the incomplete-beta continued fraction.
double beta_cf(double a, double b, double x) {
  const double tiny = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 500; ++m) {
    double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 3e-15) return h;
  }
  throw NumericError("reg_inc_beta: continued fraction failed to converge");
}

}  // namespace

double reg_inc_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("reg_inc_beta: a, b must be > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("reg_inc_beta: x must be in [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  double front = std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double ggd_survival(double beta, double x) {
  if (!(beta > 0.0)) throw DomainError("ggd_survival: beta must be > 0");
  if (x <= 0.0) return 0.5;
  return 0.5 * reg_upper_inc_gamma(1.0 / beta, std::pow(x, beta));
}

double ggd_quantile(double beta, double tau) {
  if (!(beta >= 0.2 && beta <= 200.0))
    throw DomainError("ggd_quantile: beta must be in [0.2, 200], got " + std::to_string(beta));
  if (!(tau > 0.0 && tau < 0.5))
    throw DomainError("ggd_quantile: tau must be in (0, 0.5), got " + std::to_string(tau));

  const double target = 0.5 * tau;
  // Tail asymptotic q ~ (ln(2/tau))^(1/beta), widened 4x.
  double hi = 4.0 * std::pow(std::log(2.0 / tau), 1.0 / beta);
  int guard = 0;
  while (ggd_survival(beta, hi) > target) {
    hi *= 2.0;
    if (++guard > 60) throw NumericError("ggd_quantile: failed to bracket");
  }
  double lo = 0.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (ggd_survival(beta, mid) > target)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-10 * std::max(1.0, std::fabs(hi))) return 0.5 * (lo + hi);
  }
  throw NumericError("ggd_quantile: bisection did not converge");
}

double student_t_cdf(double nu, double x) {
  if (!(nu > 0.0)) throw DomainError("student_t_cdf: nu must be > 0");
  if (x == 0.0) return 0.5;
  double ib = reg_inc_beta(0.5 * nu, 0.5, nu / (nu + x * x));
  return (x > 0.0) ? 1.0 - 0.5 * ib : 0.5 * ib;
}

double student_t_quantile(double nu, double tau) {
  if (!(nu > 4.0))
    throw DomainError("student_t_quantile: nu must be > 4, got " + std::to_string(nu));
  if (!(tau > 0.0 && tau < 0.5))
    throw DomainError("student_t_quantile: tau must be in (0, 0.5)");

  const double p = 1.0 - 0.5 * tau;
  double hi = 1.0;
  int guard = 0;
  while (student_t_cdf(nu, hi) < p) {
    hi *= 2.0;
    if (++guard > 200) throw NumericError("student_t_quantile: failed to bracket");
  }
  double lo = 0.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (student_t_cdf(nu, mid) < p)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-9 * std::max(1e-6, std::fabs(hi))) return 0.5 * (lo + hi);
  }
  throw NumericError("student_t_quantile: bisection did not converge");
}

}  // namespace kdsm::special
