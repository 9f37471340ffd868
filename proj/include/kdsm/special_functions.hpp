#pragma once

#include "kdsm/common.hpp"

namespace kdsm::special {

/// ln Gamma(x) for x > 0.
double ln_gamma(double x);

/// Standard normal density.
double std_normal_pdf(double x);

/// Standard normal CDF, absolute error below 1e-12.
double std_normal_cdf(double x);

/// Inverse of std_normal_cdf on (0,1). Round-trips to better than 1e-10.
double std_normal_quantile(double p);

/// Regularized upper incomplete gamma Q(a,x) = Gamma(a,x)/Gamma(a).
/// Series expansion for x < a+1, continued fraction otherwise.
double reg_upper_inc_gamma(double a, double x);

/// Regularized lower incomplete gamma P(a,x) = 1 - Q(a,x).
double reg_lower_inc_gamma(double a, double x);

/// Regularized incomplete beta I_x(a,b).
double reg_inc_beta(double a, double b, double x);

/// Survival function of the unit-scale generalised Gaussian p(x) ~ exp(-|x|^beta):
/// Fbar(x) = 0.5 * Q(1/beta, x^beta) for x >= 0.
double ggd_survival(double beta, double x);

/// Upper (1 - tau/2) quantile q(beta, tau) of the unit-scale generalised
/// Gaussian, i.e. the solution of Fbar(q) = tau/2. Bracketed bisection,
/// relative tolerance 1e-10. beta in [0.2, 200], tau in (0, 0.5).
double ggd_quantile(double beta, double tau);

/// CDF of the raw (unit-scale) Student-t with nu degrees of freedom.
double student_t_cdf(double nu, double x);

/// Upper (1 - tau/2) quantile of the raw Student-t, nu > 4, tau in (0, 0.5).
/// Bisection on the incomplete-beta CDF, relative error below 1e-8.
double student_t_quantile(double nu, double tau);

/// A tail level tau paired with a coverage level alpha, both in (0,1).
struct TailQuery {
  double tau;
  double alpha;
  TailQuery(double tau_, double alpha_) : tau(tau_), alpha(alpha_) {
    if (!(tau > 0.0 && tau < 1.0)) throw DomainError("TailQuery: tau must be in (0,1)");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("TailQuery: alpha must be in (0,1)");
  }
};

}  // namespace kdsm::special
