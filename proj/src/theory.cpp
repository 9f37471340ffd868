#include "kdsm/theory.hpp"

#include <cmath>

#include <json.hpp>

#include "kdsm/noise_scale.hpp"
#include "kdsm/rng.hpp"
#include "kdsm/special_functions.hpp"

namespace kdsm::theory {

namespace {

using nlohmann::ordered_json;

CheckResult make_result(const std::string& name, bool passed, ordered_json details) {
  details["passed"] = passed;
  return {name, passed, details.dump()};
}

std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return out;
}

}  // namespace

CheckResult check_slope_table() {
  // Reference (tau, c) pairs for the affine slope, tolerance 1e-3.
  static const std::vector<std::pair<double, double>> kRef = {
      {1e-5, 0.875}, {5e-5, 0.560}, {1e-4, 0.506}, {1e-3, 0.326},
      {5e-3, 0.203}, {1e-2, 0.151}, {0.05, 0.035}, {0.07, 0.012}};

  ordered_json rows = ordered_json::array();
  bool ok = true;
  for (auto [tau, expected] : kRef) {
    double got = noise::cf_slope(tau);
    bool entry_ok = std::fabs(got - expected) <= 1e-3;
    ok = ok && entry_ok;
    rows.push_back({{"tau", tau}, {"expected", expected}, {"computed", got}, {"ok", entry_ok}});
  }
  return make_result("slope_table", ok, {{"tolerance", 1e-3}, {"entries", rows}});
}

CheckResult check_slope_sign_flip() {
  const double tau_star = 2.0 * (1.0 - special::std_normal_cdf(std::sqrt(3.0)));
  bool ok = noise::cf_slope(tau_star - 1e-4) > 0.0 && noise::cf_slope(tau_star + 1e-4) < 0.0 &&
            std::fabs(tau_star - 0.083) <= 1e-3;
  return make_result("slope_sign_flip", ok,
                     {{"tau_star", tau_star},
                      {"slope_below", noise::cf_slope(tau_star - 1e-4)},
                      {"slope_above", noise::cf_slope(tau_star + 1e-4)}});
}

CheckResult check_cf_derivative() {
  // The affine radius is linear in kappa, so a unit step gives the slope.
  double deriv = noise::cf_tail_radius(4.0, 0.05) - noise::cf_tail_radius(3.0, 0.05);
  bool ok = std::fabs(deriv - 0.0687) <= 5e-4;
  return make_result("cf_derivative", ok, {{"computed", deriv}, {"expected", 0.0687}});
}

CheckResult check_ggd_anchors() {
  double k1 = noise::ggd_kurtosis(1.0);
  double k2 = noise::ggd_kurtosis(2.0);
  double k200 = noise::ggd_kurtosis(200.0);
  bool ok = std::fabs(k1 - 6.0) <= 1e-9 && std::fabs(k2 - 3.0) <= 1e-9 &&
            std::fabs(k200 - 1.8) <= 0.05;
  return make_result("ggd_anchors", ok,
                     {{"kappa_beta1", k1}, {"kappa_beta2", k2}, {"kappa_beta200", k200}});
}

CheckResult check_student_t_anchors() {
  bool ok = true;
  ordered_json rows = ordered_json::array();
  for (double nu : {4.5, 5.0, 6.0, 10.0, 30.0, 200.0}) {
    double kappa = noise::student_t_kurtosis(nu);
    double back = noise::student_t_nu_from_kurtosis(kappa);
    bool entry_ok = std::fabs(back - nu) <= 1e-10 * nu;
    ok = ok && entry_ok;
    rows.push_back({{"nu", nu}, {"kappa", kappa}, {"nu_back", back}, {"ok", entry_ok}});
  }
  ok = ok && std::fabs(noise::student_t_kurtosis(6.0) - 6.0) <= 1e-12 &&
       std::fabs(noise::student_t_kurtosis(10.0) - 4.0) <= 1e-12;
  return make_result("student_t_anchors", ok, {{"round_trips", rows}});
}

CheckResult check_ggd_monotonicity(const Grids& g) {
  ordered_json sweeps = ordered_json::array();
  bool ok = true;
  auto kappas = linspace(g.kappa_lo, g.kappa_hi, g.kappa_points);
  for (double tau : g.taus) {
    int violations = 0;
    double prev = -1.0;
    for (double kappa : kappas) {
      double r = noise::ggd_tail_radius(noise::ggd_shape_from_kurtosis(kappa), tau);
      if (prev >= 0.0 && r <= prev) ++violations;
      prev = r;
    }
    ok = ok && violations == 0;
    sweeps.push_back({{"tau", tau}, {"violations", violations}, {"points", g.kappa_points}});
  }
  return make_result("ggd_tail_monotonicity", ok, {{"sweeps", sweeps}});
}

CheckResult check_student_t_monotonicity(const Grids& g) {
  ordered_json sweeps = ordered_json::array();
  bool ok = true;
  auto nus = linspace(g.nu_lo, g.nu_hi, g.nu_points);
  for (double tau : g.taus) {
    int violations = 0;
    double prev = -1.0;
    for (double nu : nus) {
      double r = noise::student_t_tail_radius(nu, tau);
      if (prev >= 0.0 && r >= prev) ++violations;
      prev = r;
    }
    ok = ok && violations == 0;
    sweeps.push_back({{"tau", tau}, {"violations", violations}, {"points", g.nu_points}});
  }
  return make_result("student_t_tail_monotonicity", ok, {{"sweeps", sweeps}});
}

CheckResult check_cf_remainder_order() {
  const double tau = 0.01;
  auto err = [&](double delta) {
    double kappa = 3.0 + delta;
    double exact = noise::ggd_tail_radius(noise::ggd_shape_from_kurtosis(kappa), tau);
    return std::fabs(exact - noise::cf_tail_radius(kappa, tau));
  };
  ordered_json rows = ordered_json::array();
  bool ok = true;
  for (double delta : {0.4, 0.2, 0.1}) {
    double ratio = err(delta) / err(delta / 2.0);
    bool entry_ok = ratio >= 3.0 && ratio <= 5.0;
    ok = ok && entry_ok;
    rows.push_back({{"delta", delta},
                    {"error", err(delta)},
                    {"error_half", err(delta / 2.0)},
                    {"ratio", ratio},
                    {"ok", entry_ok}});
  }
  return make_result("cf_remainder_order", ok, {{"tau", tau}, {"ratios", rows}});
}

CheckResult check_min_noise_identities(const Grids& g) {
  Rng rng(20240901);
  double worst_coverage = 0.0;
  for (int i = 0; i < 200; ++i) {
    double r = 0.1 + 5.0 * rng.uniform();
    double alpha = 0.02 + 0.9 * rng.uniform();
    double sigma = noise::min_noise_sigma(r, alpha);
    double coverage = 2.0 * (1.0 - special::std_normal_cdf(r / sigma));
    worst_coverage = std::max(worst_coverage, std::fabs(coverage - alpha));
  }

  // sigma*(kappa)/sigma*(3) must not depend on alpha.
  double worst_spread = 0.0;
  for (double kappa : {3.5, 4.0, 6.0, 10.0}) {
    double r_kappa = noise::ggd_tail_radius(noise::ggd_shape_from_kurtosis(kappa), 0.01);
    double r_base = noise::ggd_tail_radius(2.0, 0.01);
    double lo = 1e300, hi = -1e300;
    for (double alpha : g.alphas) {
      double ratio = noise::min_noise_sigma(r_kappa, alpha) / noise::min_noise_sigma(r_base, alpha);
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    worst_spread = std::max(worst_spread, hi - lo);
  }
  bool ok = worst_coverage <= 1e-10 && worst_spread <= 1e-10;
  return make_result(
      "min_noise_identities", ok,
      {{"max_coverage_error", worst_coverage}, {"max_alpha_spread", worst_spread}});
}

std::vector<CheckResult> run_all(const Grids& g) {
  return {check_slope_table(),
          check_slope_sign_flip(),
          check_ggd_anchors(),
          check_student_t_anchors(),
          check_ggd_monotonicity(g),
          check_student_t_monotonicity(g),
          check_cf_remainder_order(),
          check_cf_derivative(),
          check_min_noise_identities(g)};
}

std::string report_json(const std::vector<CheckResult>& results) {
  ordered_json j;
  j["all_passed"] = all_passed(results);
  ordered_json arr = ordered_json::array();
  for (const auto& r : results) {
    ordered_json e = ordered_json::parse(r.details);
    ordered_json row;
    row["name"] = r.name;
    for (auto& [k, v] : e.items()) row[k] = v;
    arr.push_back(row);
  }
  j["checks"] = arr;
  return j.dump(2);
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.passed) return false;
  return true;
}

}  // namespace kdsm::theory
