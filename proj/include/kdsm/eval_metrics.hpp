#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "kdsm/common.hpp"

namespace kdsm::eval {

struct LabeledDataset {
  Eigen::MatrixXd X;
  std::vector<int> y;  // 1 = anomaly
  std::string name;
};

struct SplitResult {
  Eigen::MatrixXd train;
  LabeledDataset test;
};

/// Train on a random 50% of the normals; test on the held-out normals plus
/// all anomalies, capped by uniform subsampling that keeps anomalies first.
SplitResult semi_supervised_split(const LabeledDataset& ds, std::uint64_t seed,
                                  std::int64_t test_cap = 50000);

/// Train on n bootstrap draws from all rows (labels discarded); test on the
/// full dataset.
SplitResult unsupervised_split(const LabeledDataset& ds, std::uint64_t seed);

/// Mann-Whitney form: probability a random anomaly outscores a random normal,
/// ties counted one half.
double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Average precision, ranking by (score desc, index asc).
double auc_pr(const std::vector<double>& scores, const std::vector<int>& labels);

/// F1 of the top-k prediction with k = number of true anomalies (with that k,
/// precision = recall = F1).
double f1_top_k(const std::vector<double>& scores, const std::vector<int>& labels);

struct EvalReport {
  double auc_roc = 0.0;
  double auc_pr = 0.0;
  double f1 = 0.0;
  std::int64_t n_test = 0;
  std::int64_t n_anomalies = 0;
  std::uint64_t seed = 0;
  std::string split;

  std::string to_json() const;
};

EvalReport evaluate(const std::vector<double>& scores, const std::vector<int>& labels,
                    std::uint64_t seed, const std::string& split_descriptor);

/// Two-Gaussian mixture N((-2,2), 0.3 I) and N((2,-2), 0.3 I), half each,
/// all labeled normal.
LabeledDataset gen_two_gaussians(int n, std::uint64_t seed);

/// Companion anomalies: uniform on [-4,4]^2, rejecting points within radius
/// 1.5 of either mode.
Eigen::MatrixXd gen_two_gaussians_anomalies(int n, std::uint64_t seed);

/// Columns x ~ N(0,1), y ~ Laplace(0, 1/sqrt(2)); both unit variance.
Eigen::MatrixXd gen_gauss_laplace(int n, std::uint64_t seed);

/// Unit-variance generalised Gaussian samples via the Gamma transform
/// |X| = G^(1/beta), G ~ Gamma(1/beta, 1), random sign, then scaling.
std::vector<double> gen_ggd(double beta, int n, std::uint64_t seed);

/// Unit-variance Student-t samples via the normal/chi-square ratio, scaled by
/// sqrt((nu-2)/nu); nu > 4.
std::vector<double> gen_student_t(double nu, int n, std::uint64_t seed);

}  // namespace kdsm::eval
