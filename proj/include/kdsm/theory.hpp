#pragma once

#include <string>
#include <vector>

#include "kdsm/common.hpp"

namespace kdsm::theory {

/// One numeric verification with its computed evidence (JSON text).
struct CheckResult {
  std::string name;
  bool passed = false;
  std::string details;  // JSON object
};

struct Grids {
  std::vector<double> taus{0.001, 0.01, 0.02};
  double kappa_lo = 2.0;
  double kappa_hi = 30.0;
  int kappa_points = 50;
  double nu_lo = 4.5;
  double nu_hi = 100.0;
  int nu_points = 50;
  std::vector<double> alphas{0.1, 0.3, 0.5};
};

/// c(tau) = (z^2-3)/24 against the pinned reference values on the eight-point
/// tau grid, tolerance 1e-3.
CheckResult check_slope_table();

/// The slope changes sign at 2*(1 - Phi(sqrt(3))) ~ 0.0833.
CheckResult check_slope_sign_flip();

/// dR/dkappa at tau = 0.05 equals 0.0687 within 5e-4.
CheckResult check_cf_derivative();

/// kappa(beta=1) = 6, kappa(beta=2) = 3, kappa(beta=200) near 1.8.
CheckResult check_ggd_anchors();

/// kappa(nu) = 3 + 6/(nu-4) round-trips through its inverse.
CheckResult check_student_t_anchors();

/// Standardised GGD tail radius strictly increasing in kappa on the grid.
CheckResult check_ggd_monotonicity(const Grids& g);

/// Standardised Student-t tail radius strictly decreasing in nu on the grid.
CheckResult check_student_t_monotonicity(const Grids& g);

/// |exact GGD radius - affine radius| halving ratios at tau = 0.01 for
/// delta in {0.4, 0.2, 0.1}, each ratio expected in [3, 5].
CheckResult check_cf_remainder_order();

/// Coverage identity 2*(1 - Phi(R/sigma*)) = alpha on a seeded (R, alpha)
/// grid, and alpha-independence of the ratio sigma*(kappa)/sigma*(3).
CheckResult check_min_noise_identities(const Grids& g);

std::vector<CheckResult> run_all(const Grids& g);

std::string report_json(const std::vector<CheckResult>& results);

bool all_passed(const std::vector<CheckResult>& results);

}  // namespace kdsm::theory
