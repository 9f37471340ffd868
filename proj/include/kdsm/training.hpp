#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kdsm/common.hpp"
#include "kdsm/marginal_stats.hpp"
#include "kdsm/neural.hpp"
#include "kdsm/noise_scale.hpp"

namespace kdsm::train {

struct TrainConfig {
  int epochs = 500;
  int batch_size = 128;
  double lr = 5e-4;
  noise::NoiseConfig noise{};
  bool ema_enabled = false;
  double rho = 0.999;    // EMA decay
  double gamma = 80.0;   // filter percentile in (0, 100)
  std::uint64_t seed = 0;
  nn::Architecture arch{};  // input_dim is filled from the data

  void validate() const;
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

struct TrainedModel {
  nn::ScoreNetwork net;
  noise::NoisePlan plan;
  std::vector<stats::FeatureStats> feature_stats;
  TrainConfig config;
  std::vector<double> loss_history;  // per-epoch sample-weighted mean loss
};

/// Single-scale / per-feature DSM with the epsilon-prediction loss
/// (rule = Global reproduces the single-scale baseline).
TrainedModel fit_dsm(const Eigen::MatrixXd& data, const TrainConfig& cfg);

/// DSM with EMA-teacher batch filtering: per batch, samples whose teacher
/// score norm exceeds the gamma-th batch percentile are dropped before the
/// gradient step; the teacher EMA updates after the step. With gamma = 100
/// this is bit-identical to fit_dsm on the same seed.
TrainedModel fit_kdsm_ema(const Eigen::MatrixXd& data, const TrainConfig& cfg);

/// Standardise with the stored train-time stats, one eval-mode forward,
/// L2 norm per row. Never mutates the model.
std::vector<double> anomaly_score(const TrainedModel& model, const Eigen::MatrixXd& x_raw);

/// Same as anomaly_score but through the EMA teacher parameters.
std::vector<double> score_with_teacher(const TrainedModel& model, const Eigen::MatrixXd& x_raw);

/// Batch-local survivor indices under the nearest-rank percentile rule:
/// threshold = sorted norms[ceil(gamma*B/100)], survivors are all samples with
/// norm <= threshold (ties kept). Falls back to the whole batch when fewer
/// than two samples survive.
std::vector<int> filter_survivors(const std::vector<double>& teacher_norms, double gamma);

/// Serialise to a directory: checkpoint.bin, noise_plan.json,
/// feature_stats.json, config.json, loss_history.csv.
void save_model(const TrainedModel& model, const std::filesystem::path& dir);
TrainedModel load_model(const std::filesystem::path& dir);

}  // namespace kdsm::train
