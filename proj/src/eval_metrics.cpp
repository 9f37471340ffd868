#include "kdsm/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "kdsm/rng.hpp"

namespace kdsm::eval {

namespace {

void check_labels(const std::vector<double>& scores, const std::vector<int>& labels,
                  bool need_both) {
  if (scores.size() != labels.size())
    throw InvalidInputError("metrics: scores and labels differ in length");
  if (scores.empty()) throw InvalidInputError("metrics: empty input");
  auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (pos == 0) throw InvalidInputError("metrics: no positive labels");
  if (need_both && pos == labels.size())
    throw InvalidInputError("metrics: no negative labels");
}

/// Ranking by (score desc, index asc); deterministic for golden files.
std::vector<std::size_t> rank_order(const std::vector<double>& scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return scores[l] > scores[r]; });
  return order;
}

}  // namespace

double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_labels(scores, labels, true);
  auto order = rank_order(scores);

  // Sweep from lowest score: anomalies in each tie group credit the normals
  // strictly below plus half of the normals inside the group.
  std::reverse(order.begin(), order.end());
  double pos_total = 0.0, neg_total = 0.0, neg_below = 0.0, sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    double pos_in = 0.0, neg_in = 0.0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1)
        pos_in += 1.0;
      else
        neg_in += 1.0;
      ++j;
    }
    sum += pos_in * (neg_below + 0.5 * neg_in);
    neg_below += neg_in;
    pos_total += pos_in;
    neg_total += neg_in;
    i = j;
  }
  return sum / (pos_total * neg_total);
}

double auc_pr(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_labels(scores, labels, false);
  auto order = rank_order(scores);
  double tp = 0.0, ap = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] == 1) {
      tp += 1.0;
      ap += tp / static_cast<double>(rank + 1);
    }
  }
  return ap / tp;
}

double f1_top_k(const std::vector<double>& scores, const std::vector<int>& labels) {
  check_labels(scores, labels, false);
  auto order = rank_order(scores);
  auto k = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  double tp = 0.0;
  for (std::size_t rank = 0; rank < k; ++rank)
    if (labels[order[rank]] == 1) tp += 1.0;
  return tp / static_cast<double>(k);  // precision = recall atk = #positives
}

SplitResult semi_supervised_split(const LabeledDataset& ds, std::uint64_t seed,
                                  std::int64_t test_cap) {
  if (ds.X.rows() != static_cast<Eigen::Index>(ds.y.size()))
    throw InvalidInputError("split: label count does not match rows");
  std::vector<std::int64_t> normals, anomalies;
  for (std::size_t i = 0; i < ds.y.size(); ++i)
    (ds.y[i] == 1 ? anomalies : normals).push_back(static_cast<std::int64_t>(i));
  if (normals.size() < 2 || anomalies.empty())
    throw InvalidInputError("semi_supervised_split: need >= 2 normals and >= 1 anomaly");

  Rng rng(seed);
  auto perm = rng.permutation(static_cast<std::int64_t>(normals.size()));
  const auto n_train = normals.size() / 2;

  std::vector<std::int64_t> train_idx, test_idx;
  for (std::size_t i = 0; i < n_train; ++i) train_idx.push_back(normals[perm[i]]);
  for (std::size_t i = n_train; i < normals.size(); ++i) test_idx.push_back(normals[perm[i]]);
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());

  // Cap: anomalies are kept first, held-out normals fill the rest uniformly.
  std::vector<std::int64_t> test_rows;
  auto cap = static_cast<std::size_t>(test_cap);
  if (test_idx.size() + anomalies.size() > cap) {
    std::vector<std::int64_t> anom_rows = anomalies;
    if (anom_rows.size() > cap) {
      auto ap = rng.permutation(static_cast<std::int64_t>(anom_rows.size()));
      std::vector<std::int64_t> sub;
      for (std::size_t i = 0; i < cap; ++i) sub.push_back(anom_rows[ap[i]]);
      anom_rows = std::move(sub);
    }
    const auto room = cap - std::min(cap, anom_rows.size());
    auto np = rng.permutation(static_cast<std::int64_t>(test_idx.size()));
    std::vector<std::int64_t> norm_rows;
    for (std::size_t i = 0; i < std::min(room, test_idx.size()); ++i)
      norm_rows.push_back(test_idx[np[i]]);
    std::sort(norm_rows.begin(), norm_rows.end());
    std::sort(anom_rows.begin(), anom_rows.end());
    test_rows = norm_rows;
    test_rows.insert(test_rows.end(), anom_rows.begin(), anom_rows.end());
  } else {
    test_rows = test_idx;
    test_rows.insert(test_rows.end(), anomalies.begin(), anomalies.end());
  }

  SplitResult out;
  out.train.resize(static_cast<Eigen::Index>(train_idx.size()), ds.X.cols());
  for (std::size_t i = 0; i < train_idx.size(); ++i)
    out.train.row(static_cast<Eigen::Index>(i)) = ds.X.row(train_idx[i]);
  out.test.X.resize(static_cast<Eigen::Index>(test_rows.size()), ds.X.cols());
  out.test.y.resize(test_rows.size());
  for (std::size_t i = 0; i < test_rows.size(); ++i) {
    out.test.X.row(static_cast<Eigen::Index>(i)) = ds.X.row(test_rows[i]);
    out.test.y[i] = ds.y[static_cast<std::size_t>(test_rows[i])];
  }
  out.test.name = ds.name.empty() ? "semi_supervised" : ds.name + "/semi_supervised";
  return out;
}

SplitResult unsupervised_split(const LabeledDataset& ds, std::uint64_t seed) {
  if (ds.X.rows() != static_cast<Eigen::Index>(ds.y.size()))
    throw InvalidInputError("split: label count does not match rows");
  const auto n = ds.X.rows();
  if (n < 1) throw InvalidInputError("unsupervised_split: empty dataset");

  Rng rng(seed);
  SplitResult out;
  out.train.resize(n, ds.X.cols());
  for (Eigen::Index i = 0; i < n; ++i)
    out.train.row(i) = ds.X.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  out.test = ds;
  out.test.name = ds.name.empty() ? "unsupervised" : ds.name + "/unsupervised";
  return out;
}

EvalReport evaluate(const std::vector<double>& scores, const std::vector<int>& labels,
                    std::uint64_t seed, const std::string& split_descriptor) {
  EvalReport r;
  r.auc_roc = auc_roc(scores, labels);
  r.auc_pr = auc_pr(scores, labels);
  r.f1 = f1_top_k(scores, labels);
  r.n_test = static_cast<std::int64_t>(labels.size());
  r.n_anomalies = std::count(labels.begin(), labels.end(), 1);
  r.seed = seed;
  r.split = split_descriptor;
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["auc_roc"] = auc_roc;
  j["auc_pr"] = auc_pr;
  j["f1"] = f1;
  j["n_test"] = n_test;
  j["n_anomalies"] = n_anomalies;
  j["seed"] = seed;
  j["split"] = split;
  return j.dump(2);
}

LabeledDataset gen_two_gaussians(int n, std::uint64_t seed) {
  if (n < 2) throw InvalidInputError("gen_two_gaussians: n must be >= 2");
  Rng rng(seed);
  const double sd = std::sqrt(0.3);
  LabeledDataset ds;
  ds.X.resize(n, 2);
  ds.y.assign(static_cast<std::size_t>(n), 0);
  ds.name = "two_gaussians";
  const int half = n / 2;
  for (int i = 0; i < n; ++i) {
    double cx = i < half ? -2.0 : 2.0;
    double cy = i < half ? 2.0 : -2.0;
    ds.X(i, 0) = cx + sd * rng.normal();
    ds.X(i, 1) = cy + sd * rng.normal();
  }
  return ds;
}

Eigen::MatrixXd gen_two_gaussians_anomalies(int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd out(n, 2);
  int got = 0;
  while (got < n) {
    double x = -4.0 + 8.0 * rng.uniform();
    double y = -4.0 + 8.0 * rng.uniform();
    double d1 = std::hypot(x + 2.0, y - 2.0);
    double d2 = std::hypot(x - 2.0, y + 2.0);
    if (d1 >= 1.5 && d2 >= 1.5) {
      out(got, 0) = x;
      out(got, 1) = y;
      ++got;
    }
  }
  return out;
}

Eigen::MatrixXd gen_gauss_laplace(int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd out(n, 2);
  const double scale = 1.0 / std::sqrt(2.0);  // unit-variance Laplace
  for (int i = 0; i < n; ++i) {
    out(i, 0) = rng.normal();
    double u = rng.uniform();
    out(i, 1) = (u < 0.5) ? scale * std::log(2.0 * u) : -scale * std::log(2.0 * (1.0 - u));
  }
  return out;
}

std::vector<double> gen_ggd(double beta, int n, std::uint64_t seed) {
  if (!(beta >= 0.2 && beta <= 200.0))
    throw DomainError("gen_ggd: beta must be in [0.2, 200]");
  Rng rng(seed);
  // Unit-scale variance Gamma(3/beta)/Gamma(1/beta); divide to standardise.
  const double v = std::exp(std::lgamma(3.0 / beta) - std::lgamma(1.0 / beta));
  const double inv_sd = 1.0 / std::sqrt(v);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (auto& x : out) {
    double g = rng.gamma(1.0 / beta);
    double mag = std::pow(g, 1.0 / beta);
    double sign = (rng.uniform() < 0.5) ? -1.0 : 1.0;
    x = sign * mag * inv_sd;
  }
  return out;
}

std::vector<double> gen_student_t(double nu, int n, std::uint64_t seed) {
  if (!(nu > 4.0)) throw DomainError("gen_student_t: nu must be > 4");
  Rng rng(seed);
  const double scale = std::sqrt((nu - 2.0) / nu);  // unit variance
  std::vector<double> out(static_cast<std::size_t>(n));
  for (auto& x : out) {
    double z = rng.normal();
    double chi2 = 2.0 * rng.gamma(0.5 * nu);
    x = scale * z / std::sqrt(chi2 / nu);
  }
  return out;
}

}  // namespace kdsm::eval
