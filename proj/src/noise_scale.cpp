#include "kdsm/noise_scale.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "kdsm/special_functions.hpp"

namespace kdsm::noise {

using special::ln_gamma;
using special::std_normal_quantile;

std::string rule_name(Rule r) {
  switch (r) {
    case Rule::CfAffine: return "cf";
    case Rule::GgdExact: return "ggd";
    case Rule::Iqr: return "iqr";
    case Rule::Global: return "global";
  }
  throw InvalidInputError("rule_name: unknown rule");
}

Rule rule_from_name(const std::string& name) {
  if (name == "cf") return Rule::CfAffine;
  if (name == "ggd") return Rule::GgdExact;
  if (name == "iqr") return Rule::Iqr;
  if (name == "global") return Rule::Global;
  throw InvalidInputError("unknown noise rule '" + name + "' (expected cf|ggd|iqr|global)");
}

double cf_sigma(double kappa, double sigma_base, double c, Clip clip) {
  if (!(sigma_base > 0.0)) throw InvalidInputError("cf_sigma: sigma_base must be > 0");
  if (!(clip.lo > 0.0 && clip.lo <= clip.hi))
    throw InvalidInputError("cf_sigma: need 0 < clip.lo <= clip.hi");
  return std::clamp(sigma_base * (1.0 + c * (kappa - 3.0)), clip.lo, clip.hi);
}

double cf_slope(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("cf_slope: tau must be in (0,1)");
  double z = std_normal_quantile(1.0 - 0.5 * tau);
  return (z * z - 3.0) / 24.0;
}

double cf_tail_radius(double kappa, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("cf_tail_radius: tau must be in (0,1)");
  double z = std_normal_quantile(1.0 - 0.5 * tau);
  return z + (kappa - 3.0) / 24.0 * (z * z * z - 3.0 * z);
}

double ggd_kurtosis(double beta) {
  if (!(beta > 0.0)) throw DomainError("ggd_kurtosis: beta must be > 0");
  return std::exp(ln_gamma(5.0 / beta) + ln_gamma(1.0 / beta) - 2.0 * ln_gamma(3.0 / beta));
}

double ggd_shape_from_kurtosis(double kappa) {
  kappa = std::clamp(kappa, 1.9, 50.0);
  // kappa(beta) decreases from ~400 at beta=0.25 to ~1.80 at beta=250.
  double lo = 0.25, hi = 250.0;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (ggd_kurtosis(mid) > kappa)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-12 * hi) return 0.5 * (lo + hi);
  }
  throw NumericError("ggd_shape_from_kurtosis: bisection did not converge");
}

double ggd_tail_radius(double beta, double tau) {
  double v = std::exp(ln_gamma(3.0 / beta) - ln_gamma(1.0 / beta));
  return special::ggd_quantile(beta, tau) / std::sqrt(v);
}

double student_t_kurtosis(double nu) {
  if (!(nu > 4.0)) throw DomainError("student_t_kurtosis: nu must be > 4");
  return 3.0 + 6.0 / (nu - 4.0);
}

double student_t_nu_from_kurtosis(double kappa) {
  if (!(kappa > 3.0)) throw DomainError("student_t_nu_from_kurtosis: kappa must be > 3");
  return 4.0 + 6.0 / (kappa - 3.0);
}

double student_t_tail_radius(double nu, double tau) {
  if (!(nu > 4.0)) throw DomainError("student_t_tail_radius: nu must be > 4");
  return special::student_t_quantile(nu, tau) * std::sqrt((nu - 2.0) / nu);
}

double min_noise_sigma(double tail_radius, double alpha) {
  if (!(tail_radius > 0.0)) throw DomainError("min_noise_sigma: tail radius must be > 0");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("min_noise_sigma: alpha must be in (0,1)");
  return tail_radius / std_normal_quantile(1.0 - 0.5 * alpha);
}

NoisePlan make_noise_plan(const std::vector<stats::FeatureStats>& feature_stats,
                          const NoiseConfig& cfg) {
  if (feature_stats.empty()) throw InvalidInputError("make_noise_plan: no features");
  if (!(cfg.sigma_base > 0.0)) throw InvalidInputError("make_noise_plan: sigma_base must be > 0");
  if (!(cfg.clip.lo > 0.0 && cfg.clip.lo <= cfg.clip.hi))
    throw InvalidInputError("make_noise_plan: need 0 < clip.lo <= clip.hi");

  NoisePlan plan;
  plan.rule = cfg.rule;
  plan.sigma_base = cfg.sigma_base;
  plan.c = cfg.c;
  plan.clip = cfg.clip;
  plan.tau = cfg.tau;
  if (cfg.rule == Rule::GgdExact && !plan.tau) plan.tau = 1e-3;

  auto clipv = [&](double s) { return std::clamp(s, cfg.clip.lo, cfg.clip.hi); };
  const double gauss_radius =
      (cfg.rule == Rule::GgdExact) ? ggd_tail_radius(2.0, *plan.tau) : 0.0;

  for (const auto& fs : feature_stats) {
    plan.kurtoses.push_back(fs.kurtosis_rearranged);
    if (fs.degenerate) {
      plan.sigmas.push_back(clipv(cfg.sigma_base));
      continue;
    }
    switch (cfg.rule) {
      case Rule::CfAffine:
        plan.sigmas.push_back(cf_sigma(fs.kurtosis_rearranged, cfg.sigma_base, cfg.c, cfg.clip));
        break;
      case Rule::GgdExact: {
        double beta = ggd_shape_from_kurtosis(fs.kurtosis_rearranged);
        plan.sigmas.push_back(
            clipv(cfg.sigma_base * ggd_tail_radius(beta, *plan.tau) / gauss_radius));
        break;
      }
      case Rule::Iqr:
        // Gaussian-normalised inverse spread: IQR of N(0,1) is 1.349.
        plan.sigmas.push_back(fs.iqr > 0.0 ? clipv(cfg.sigma_base * 1.349 / fs.iqr)
                                           : clipv(cfg.sigma_base));
        break;
      case Rule::Global:
        plan.sigmas.push_back(clipv(cfg.sigma_base));
        break;
    }
  }
  return plan;
}

std::string NoisePlan::to_json() const {
  nlohmann::ordered_json j;
  j["rule"] = rule_name(rule);
  j["sigma_base"] = sigma_base;
  j["c"] = c;
  j["clip"] = {clip.lo, clip.hi};
  if (tau)
    j["tau"] = *tau;
  else
    j["tau"] = nullptr;
  j["sigmas"] = sigmas;
  j["kurtoses"] = kurtoses;
  return j.dump(2);
}

NoisePlan NoisePlan::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  NoisePlan p;
  p.rule = rule_from_name(j.at("rule").get<std::string>());
  p.sigma_base = j.at("sigma_base").get<double>();
  p.c = j.at("c").get<double>();
  p.clip.lo = j.at("clip").at(0).get<double>();
  p.clip.hi = j.at("clip").at(1).get<double>();
  if (!j.at("tau").is_null()) p.tau = j.at("tau").get<double>();
  p.sigmas = j.at("sigmas").get<std::vector<double>>();
  p.kurtoses = j.at("kurtoses").get<std::vector<double>>();
  return p;
}

}  // namespace kdsm::noise
