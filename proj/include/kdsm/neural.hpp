#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <utility>

#include "kdsm/common.hpp"
#include "kdsm/rng.hpp"

namespace kdsm::nn {

/// Residual MLP: stem Linear(d -> main), n_blocks of
/// [Linear(main -> hidden), ReLU, dropout1, Linear(hidden -> main), dropout2,
/// residual add], head Linear(main -> d). No normalisation layers.
struct Architecture {
  int input_dim = 0;
  int n_blocks = 6;
  int main_width = 512;
  int hidden_width = 512;
  double dropout1 = 0.2;
  double dropout2 = 0.1;

  void validate() const;
  std::int64_t param_count() const;
};

enum class Mode { Train, Eval };

/// The score network s(x). Parameters live in one flat vector; an optional
/// EMA shadow copy of the same length backs the teacher.
class ScoreNetwork {
 public:
  ScoreNetwork(Architecture arch, Eigen::VectorXd params);

  /// Deterministic fan-in uniform init; the output head starts at zero so the
  /// initial network is identically zero and the first-step loss sits at the
  /// d/2 expectation anchor.
  static ScoreNetwork init(const Architecture& arch, std::uint64_t seed);

  const Architecture& arch() const { return arch_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& mutable_params() { return params_; }

  bool has_ema() const { return ema_.size() != 0; }
  const Eigen::VectorXd& ema_params() const;
  void init_ema() { ema_ = params_; }
  void set_ema(Eigen::VectorXd ema);
  /// ema <- rho * ema + (1 - rho) * params.
  void ema_update(double rho);

  /// Eval mode is deterministic and dropout-free. Train mode applies inverted
  /// dropout with masks drawn from `rng` (required when a dropout rate is
  /// nonzero).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Mode mode, Rng* rng = nullptr) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Mode mode, std::uint64_t dropout_seed) const;

  /// Eval-mode forward through the EMA parameters.
  Eigen::MatrixXd forward_ema(const Eigen::MatrixXd& x) const;

  /// Loss 1/(2B) sum_i ||s(x_noisy_i) + eps_i||^2 and its exact gradient with
  /// respect to every parameter. The internal train-mode forward and the
  /// backward pass share one set of dropout masks drawn from `rng`.
  std::pair<double, Eigen::VectorXd> loss_and_grad(const Eigen::MatrixXd& x_noisy,
                                                   const Eigen::MatrixXd& eps_target,
                                                   Rng& rng) const;
  std::pair<double, Eigen::VectorXd> loss_and_grad(const Eigen::MatrixXd& x_noisy,
                                                   const Eigen::MatrixXd& eps_target,
                                                   std::uint64_t dropout_seed) const;

 private:
  Architecture arch_;
  Eigen::VectorXd params_;
  Eigen::VectorXd ema_;
};

/// Adam with bias-corrected moments.
struct AdamState {
  Eigen::VectorXd m, v;
  std::int64_t t = 0;
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamState(std::int64_t n_params, double lr_);
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
};

/// Versioned binary checkpoint: architecture, flat parameters, optional EMA.
void save_checkpoint(const ScoreNetwork& net, const std::filesystem::path& file);
ScoreNetwork load_checkpoint(const std::filesystem::path& file);

}  // namespace kdsm::nn
