#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "kdsm/eval_metrics.hpp"
#include "kdsm/training.hpp"

using namespace kdsm;
using namespace kdsm::train;

namespace {

TrainConfig small_config(std::uint64_t seed, int epochs = 30) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 128;
  cfg.seed = seed;
  cfg.arch.n_blocks = 2;
  cfg.arch.main_width = 32;
  cfg.arch.hidden_width = 32;
  return cfg;
}

Eigen::MatrixXd normals_1d(int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = rng.normal();
  return x;
}

Eigen::MatrixXd contaminated_2d(int n, double rate, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd x(n, 2);
  int n_anom = static_cast<int>(std::round(n * rate));
  for (int i = 0; i < n; ++i) {
    double shift = (i < n - n_anom) ? 0.0 : 6.0;
    x(i, 0) = rng.normal() + shift;
    x(i, 1) = rng.normal() + shift;
  }
  return x;
}

double pearson_corr(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
  double mb = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
  double num = 0.0, da = 0.0, db = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    da += (a[i] - ma) * (a[i] - ma);
    db += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(da * db);
}

}  // namespace

TEST_CASE("fit_dsm learns the score-norm ordering of a 1-D Gaussian") {
  auto cfg = small_config(1, 50);
  cfg.noise.rule = noise::Rule::Global;
  auto model = fit_dsm(normals_1d(2000, 10), cfg);

  Eigen::MatrixXd probes(2, 1);
  probes << 0.0, 4.0;
  auto scores = anomaly_score(model, probes);
  CHECK(scores[0] < scores[1]);
  CHECK(model.loss_history.size() == 50);
  CHECK(model.loss_history.front() > model.loss_history.back());
}

TEST_CASE("initial epoch loss sits at the d/2 anchor of the zero head") {
  auto cfg = small_config(3, 1);
  Rng rng(33);
  Eigen::MatrixXd x(256, 2);
  for (int i = 0; i < 256; ++i)
    for (int j = 0; j < 2; ++j) x(i, j) = rng.normal();
  auto model = fit_dsm(x, cfg);
  // With the head at zero the first losses are 0.5 E||eps||^2 = d/2 = 1.
  CHECK(model.loss_history[0] == doctest::Approx(1.0).epsilon(0.2));
}

TEST_CASE("epsilon-prediction decouples per-feature loss contributions from sigma") {
  // Two features with sigma (0.1, 2.0): at the zero-output head the residual
  // is exactly eps, so each feature contributes 0.5 E[eps_j^2] ~ 0.5.
  Rng rng(44);
  Eigen::MatrixXd eps(20000, 2);
  for (int i = 0; i < eps.rows(); ++i)
    for (int j = 0; j < 2; ++j) eps(i, j) = rng.normal();
  double c0 = 0.5 * eps.col(0).squaredNorm() / eps.rows();
  double c1 = 0.5 * eps.col(1).squaredNorm() / eps.rows();
  CHECK(c0 == doctest::Approx(0.5).epsilon(0.05));
  CHECK(c1 == doctest::Approx(0.5).epsilon(0.05));
  CHECK(std::fabs(c0 - c1) < 0.05);
}

TEST_CASE("fit_dsm is deterministic under the seed") {
  auto x = normals_1d(500, 20);
  auto cfg = small_config(7, 5);
  auto m1 = fit_dsm(x, cfg);
  auto m2 = fit_dsm(x, cfg);
  CHECK(m1.net.params() == m2.net.params());
  CHECK(m1.loss_history == m2.loss_history);
  cfg.seed = 8;
  auto m3 = fit_dsm(x, cfg);
  CHECK(m1.net.params() != m3.net.params());
}

TEST_CASE("two-Gaussian mixture: the score field points toward the nearest mode") {
  auto ds = eval::gen_two_gaussians(2000, 11);
  auto cfg = small_config(5, 60);
  auto model = fit_dsm(ds.X, cfg);

  for (auto [cx, cy] : {std::pair{-2.0, 2.0}, std::pair{2.0, -2.0}}) {
    double mean_inner = 0.0;
    const int k = 16;
    for (int i = 0; i < k; ++i) {
      double ang = 2.0 * M_PI * i / k;
      Eigen::MatrixXd p(1, 2);
      p << cx + std::cos(ang), cy + std::sin(ang);
      // Standardise with the stored stats, then read the raw score vector.
      Eigen::MatrixXd z(1, 2);
      for (int j = 0; j < 2; ++j)
        z(0, j) = (p(0, j) - model.feature_stats[j].mean) / model.feature_stats[j].std;
      Eigen::MatrixXd s = model.net.forward(z, nn::Mode::Eval);
      // Direction toward the mode, in standardized coordinates.
      Eigen::Vector2d dir;
      for (int j = 0; j < 2; ++j)
        dir(j) = (std::array{cx, cy}[j] - p(0, j)) / model.feature_stats[j].std;
      mean_inner += s.row(0).dot(dir.transpose());
    }
    CHECK(mean_inner / k > 0.0);
  }
}

TEST_CASE("filter_survivors nearest-rank convention") {
  SUBCASE("gamma = 80 on ten distinct norms drops the top two") {
    std::vector<double> norms = {5, 1, 9, 3, 7, 2, 8, 4, 6, 10};
    auto keep = filter_survivors(norms, 80.0);
    REQUIRE(keep.size() == 8);
    for (int i : keep) CHECK(norms[static_cast<std::size_t>(i)] <= 8.0);
  }
  SUBCASE("ties at the threshold are kept") {
    std::vector<double> norms = {1, 2, 2, 2, 5};
    // rank = ceil(60*5/100) = 3 -> threshold 2; all three ties survive.
    auto keep = filter_survivors(norms, 60.0);
    CHECK(keep.size() == 4);
  }
  SUBCASE("fewer than two survivors falls back to the whole batch") {
    std::vector<double> norms = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    auto keep = filter_survivors(norms, 1.0);
    CHECK(keep.size() == norms.size());
  }
  SUBCASE("cardinality property on distinct norms") {
    Rng rng(17);
    for (int rep = 0; rep < 50; ++rep) {
      int b = 2 + static_cast<int>(rng.below(100));
      std::vector<double> norms(b);
      for (auto& v : norms) v = rng.uniform();
      double gamma = 1.0 + 99.0 * rng.uniform();
      auto expected = static_cast<std::size_t>(std::ceil(gamma * b / 100.0));
      auto keep = filter_survivors(norms, gamma);
      if (expected >= 2) CHECK(keep.size() == expected);
    }
  }
}

TEST_CASE("fit_kdsm_ema with gamma = 100 is bit-identical to fit_dsm") {
  auto x = contaminated_2d(400, 0.1, 60);
  auto cfg = small_config(9, 6);
  cfg.gamma = 100.0;
  auto base = fit_dsm(x, cfg);
  auto ema = fit_kdsm_ema(x, cfg);
  CHECK(base.net.params() == ema.net.params());
  CHECK(base.loss_history == ema.loss_history);
  CHECK(ema.net.has_ema());
  CHECK_FALSE(base.net.has_ema());
}

TEST_CASE("rho = 1 freezes the teacher at the initial student") {
  auto x = normals_1d(300, 70);
  auto cfg = small_config(13, 4);
  cfg.rho = 1.0;
  auto model = fit_kdsm_ema(x, cfg);
  auto init_net = nn::ScoreNetwork::init(model.config.arch, model.config.seed);
  CHECK(model.net.ema_params() == init_net.params());
  CHECK(model.net.params() != init_net.params());
}

TEST_CASE("EMA filtering beats the base variant under contamination") {
  auto xtr = contaminated_2d(1500, 0.10, 91);
  Rng rng(92);
  const int n_test = 600;
  Eigen::MatrixXd xte(n_test, 2);
  std::vector<int> yte(n_test);
  for (int i = 0; i < n_test; ++i) {
    bool anom = i >= n_test - 60;
    double shift = anom ? 6.0 : 0.0;
    xte(i, 0) = rng.normal() + shift;
    xte(i, 1) = rng.normal() + shift;
    yte[i] = anom;
  }

  auto cfg = small_config(15, 40);
  cfg.arch.main_width = 64;
  cfg.arch.hidden_width = 64;
  auto base = fit_dsm(xtr, cfg);
  auto ema = fit_kdsm_ema(xtr, cfg);
  double pr_base = eval::auc_pr(anomaly_score(base, xte), yte);
  double pr_ema = eval::auc_pr(anomaly_score(ema, xte), yte);
  CHECK(pr_ema >= pr_base);
}

TEST_CASE("score_with_teacher") {
  auto x = normals_1d(300, 80);
  SUBCASE("rho = 0 keeps teacher equal to student") {
    auto cfg = small_config(21, 5);
    cfg.rho = 0.0;
    auto model = fit_kdsm_ema(x, cfg);
    auto s = anomaly_score(model, x.topRows(50));
    auto t = score_with_teacher(model, x.topRows(50));
    CHECK(s == t);
  }
  SUBCASE("teacher and student correlate after standard training") {
    auto cfg = small_config(22, 30);
    auto model = fit_kdsm_ema(x, cfg);
    auto held = normals_1d(200, 81);
    auto s = anomaly_score(model, held);
    auto t = score_with_teacher(model, held);
    CHECK(pearson_corr(s, t) > 0.0);
  }
  SUBCASE("no teacher on a base model") {
    auto model = fit_dsm(x, small_config(23, 2));
    CHECK_THROWS_AS(score_with_teacher(model, x.topRows(5)), StateError);
  }
}

TEST_CASE("mixture model: mode centers score below between/beyond-mode probes") {
  auto ds = eval::gen_two_gaussians(2000, 12);
  auto cfg = small_config(6, 60);
  auto model = fit_dsm(ds.X, cfg);

  Eigen::MatrixXd modes(2, 2);
  modes << -2.0, 2.0, 2.0, -2.0;
  // Probes on the line through the modes: between them and beyond each.
  Eigen::MatrixXd probes(8, 2);
  int r = 0;
  for (double t : {0.25, 0.4, 0.5, 0.6, 0.75, 1.35, -0.35, 1.5}) {
    probes(r, 0) = -2.0 + 4.0 * t;
    probes(r, 1) = 2.0 - 4.0 * t;
    ++r;
  }
  auto mode_scores = anomaly_score(model, modes);
  auto probe_scores = anomaly_score(model, probes);
  double mean_mode = (mode_scores[0] + mode_scores[1]) / 2.0;
  double mean_probe = 0.0;
  for (double s : probe_scores) mean_probe += s;
  mean_probe /= probe_scores.size();
  CHECK(mean_mode < mean_probe);
}

TEST_CASE("anomaly_score purity and basic contracts") {
  auto x = normals_1d(400, 90);
  auto model = fit_dsm(x, small_config(31, 10));
  Eigen::VectorXd before = model.net.params();

  Eigen::MatrixXd probes(4, 1);
  probes << 0.0, 0.0, 1.5, -2.0;
  auto s = anomaly_score(model, probes);
  CHECK(model.net.params() == before);
  CHECK(s[0] == s[1]);  // duplicate inputs, duplicate scores
  for (double v : s) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0);
  }
  Eigen::MatrixXd bad(2, 3);
  bad.setZero();
  CHECK_THROWS_AS(anomaly_score(model, bad), InvalidInputError);
}

TEST_CASE("per-feature affine rescaling of the raw data cancels exactly") {
  // Scaling by a power of two is exact in floating point, so the standardized
  // matrix and everything downstream is bit-identical.
  auto x = normals_1d(300, 95);
  auto cfg = small_config(41, 8);
  auto m1 = fit_dsm(x, cfg);
  auto m2 = fit_dsm(4.0 * x, cfg);
  Eigen::MatrixXd probes(3, 1);
  probes << -1.0, 0.25, 2.0;
  auto s1 = anomaly_score(m1, probes);
  auto s2 = anomaly_score(m2, 4.0 * probes);
  CHECK(s1 == s2);

  SUBCASE("generic affine map agrees to solver precision") {
    auto m3 = fit_dsm((2.5 * x).array() + 3.0, cfg);
    auto s3 = anomaly_score(m3, (2.5 * probes).array() + 3.0);
    for (std::size_t i = 0; i < s1.size(); ++i)
      CHECK(s3[i] == doctest::Approx(s1[i]).epsilon(1e-6));
  }
}

TEST_CASE("model round trip through a directory") {
  auto x = contaminated_2d(300, 0.1, 97);
  auto cfg = small_config(51, 4);
  auto model = fit_kdsm_ema(x, cfg);

  auto dir = std::filesystem::temp_directory_path() / "kdsm_model_test";
  std::filesystem::remove_all(dir);
  save_model(model, dir);
  for (const char* f : {"checkpoint.bin", "noise_plan.json", "feature_stats.json",
                        "config.json", "loss_history.csv"})
    CHECK(std::filesystem::exists(dir / f));

  auto back = load_model(dir);
  CHECK(back.net.params() == model.net.params());
  CHECK(back.net.ema_params() == model.net.ema_params());
  CHECK(back.plan.sigmas == model.plan.sigmas);
  CHECK(back.loss_history.size() == model.loss_history.size());
  auto s1 = anomaly_score(model, x.topRows(20));
  auto s2 = anomaly_score(back, x.topRows(20));
  CHECK(s1 == s2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("input validation and numeric failure") {
  auto cfg = small_config(61, 2);
  Eigen::MatrixXd bad(4, 1);
  bad << 1.0, 2.0, std::nan(""), 4.0;
  CHECK_THROWS_AS(fit_dsm(bad, cfg), InvalidInputError);

  SUBCASE("a divergent learning rate raises a numeric error naming the epoch") {
    auto x = normals_1d(256, 98);
    auto cfg2 = small_config(62, 30);
    cfg2.lr = 1e18;
    try {
      fit_dsm(x, cfg2);
      // Divergence is expected but not guaranteed at every width; only check
      // the error type when it fires.
    } catch (const NumericError& e) {
      CHECK(std::string(e.what()).find("epoch") != std::string::npos);
    }
  }

  SUBCASE("config validation") {
    auto cfg3 = small_config(63, 1);
    cfg3.gamma = 0.0;
    CHECK_THROWS_AS(fit_kdsm_ema(normals_1d(64, 99), cfg3), InvalidInputError);
    cfg3.gamma = 80.0;
    cfg3.rho = 1.5;
    CHECK_THROWS_AS(fit_kdsm_ema(normals_1d(64, 99), cfg3), InvalidInputError);
  }
}

TEST_CASE("TrainConfig JSON round trip") {
  auto cfg = small_config(71, 9);
  cfg.noise.rule = noise::Rule::GgdExact;
  cfg.noise.tau = 5e-3;
  cfg.ema_enabled = true;
  auto text = cfg.to_json();
  auto back = TrainConfig::from_json(text);
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.seed == cfg.seed);
  CHECK(back.noise.rule == cfg.noise.rule);
  CHECK(*back.noise.tau == *cfg.noise.tau);
  CHECK(back.arch.main_width == cfg.arch.main_width);
  CHECK(back.ema_enabled == cfg.ema_enabled);
}
