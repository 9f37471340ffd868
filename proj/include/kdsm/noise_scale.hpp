#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kdsm/common.hpp"
#include "kdsm/marginal_stats.hpp"

namespace kdsm::noise {

enum class Rule { CfAffine, GgdExact, Iqr, Global };

std::string rule_name(Rule r);
Rule rule_from_name(const std::string& name);

struct Clip {
  double lo = 0.1;
  double hi = 2.0;
};

struct NoiseConfig {
  Rule rule = Rule::CfAffine;
  double sigma_base = 0.5;
  double c = 0.33;
  Clip clip{};
  std::optional<double> tau;  // tail level for the GGD rule (default 1e-3)
  int bins = 64;              // histogram bins for kurtosis; 0 = Freedman-Diaconis
};

/// Per-feature noise scales plus everything that produced them.
struct NoisePlan {
  std::vector<double> sigmas;
  Rule rule = Rule::CfAffine;
  double sigma_base = 0.5;
  double c = 0.33;
  Clip clip{};
  std::optional<double> tau;
  std::vector<double> kurtoses;  // rearranged kurtoses fed to the rule

  std::string to_json() const;
  static NoisePlan from_json(const std::string& text);
};

/// sigma_base * (1 + c * (kappa - 3)), clipped to [clip.lo, clip.hi].
double cf_sigma(double kappa, double sigma_base, double c, Clip clip);

/// First-order slope c(tau) = (z^2 - 3) / 24 with z = Phi^-1(1 - tau/2).
/// Positive iff tau < 2*(1 - Phi(sqrt(3))) ~ 0.083.
double cf_slope(double tau);

/// Cornish-Fisher tail radius z + (kappa-3)/24 * (z^3 - 3z).
double cf_tail_radius(double kappa, double tau);

/// Unit-variance kurtosis of the generalised Gaussian family,
/// kappa(beta) = Gamma(5/beta) Gamma(1/beta) / Gamma(3/beta)^2.
double ggd_kurtosis(double beta);

/// Invert ggd_kurtosis by bisection (kappa(beta) is strictly decreasing).
/// kappa is clipped to [1.9, 50] before inversion.
double ggd_shape_from_kurtosis(double kappa);

/// Standardised (unit-variance) tail radius of the generalised Gaussian:
/// q(beta, tau) / sqrt(v(beta)) with v(beta) = Gamma(3/beta)/Gamma(1/beta).
double ggd_tail_radius(double beta, double tau);

/// kappa(nu) = 3 + 6/(nu - 4) for nu > 4.
double student_t_kurtosis(double nu);

/// nu(kappa) = 4 + 6/(kappa - 3) for kappa > 3.
double student_t_nu_from_kurtosis(double kappa);

/// Raw Student-t quantile scaled to unit variance by sqrt((nu-2)/nu).
double student_t_tail_radius(double nu, double tau);

/// Minimum sigma achieving coverage Pr(|eps| >= R) = alpha for
/// eps ~ N(0, sigma^2): sigma* = R / Phi^-1(1 - alpha/2).
double min_noise_sigma(double tail_radius, double alpha);

/// Stack per-feature scales under the configured rule and clip them.
/// Degenerate features always receive sigma_base (clipped).
NoisePlan make_noise_plan(const std::vector<stats::FeatureStats>& feature_stats,
                          const NoiseConfig& cfg);

}  // namespace kdsm::noise
