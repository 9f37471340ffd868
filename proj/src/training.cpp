#include "kdsm/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace kdsm::train {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// The training loop draws from its own stream so that network init (which
// consumes a data-dependent number of variates) cannot shift it.
constexpr std::uint64_t kLoopStreamSalt = 0x9E3779B97F4A7C15ULL;

MatrixXd standardize_matrix(const Eigen::MatrixXd& x,
                            const std::vector<stats::FeatureStats>& fs) {
  MatrixXd z(x.rows(), x.cols());
  for (int j = 0; j < x.cols(); ++j) {
    const auto& s = fs[static_cast<std::size_t>(j)];
    if (s.degenerate)
      z.col(j).setZero();
    else
      z.col(j) = (x.col(j).array() - s.mean) / s.std;
  }
  return z;
}

std::vector<double> row_norms(const MatrixXd& m) {
  std::vector<double> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m.row(i).norm();
  return out;
}

TrainedModel fit_impl(const Eigen::MatrixXd& data, TrainConfig cfg, bool use_ema_filter) {
  cfg.validate();
  if (data.rows() < 1 || data.cols() < 1) throw InvalidInputError("fit: empty data");
  if (!data.allFinite()) throw InvalidInputError("fit: data contains NaN or Inf");

  const auto n = data.rows();
  const auto d = data.cols();
  cfg.arch.input_dim = static_cast<int>(d);
  cfg.ema_enabled = use_ema_filter;

  // Feature statistics and the noise plan come from the full training split,
  // before the first epoch.
  std::vector<stats::FeatureStats> fs;
  fs.reserve(static_cast<std::size_t>(d));
  for (Eigen::Index j = 0; j < d; ++j) {
    std::vector<double> col(data.col(j).data(), data.col(j).data() + n);
    fs.push_back(stats::compute_feature_stats(col, cfg.noise.bins));
  }
  noise::NoisePlan plan = noise::make_noise_plan(fs, cfg.noise);
  VectorXd sigma = Eigen::Map<const VectorXd>(plan.sigmas.data(), d);

  MatrixXd z = standardize_matrix(data, fs);

  auto net = nn::ScoreNetwork::init(cfg.arch, cfg.seed);
  if (use_ema_filter) net.init_ema();
  nn::AdamState adam(net.params().size(), cfg.lr);
  Rng rng(cfg.seed + kLoopStreamSalt);

  std::vector<double> loss_history;
  loss_history.reserve(static_cast<std::size_t>(cfg.epochs));

  const auto bs = static_cast<Eigen::Index>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto perm = rng.permutation(n);
    double epoch_loss = 0.0;
    std::int64_t epoch_samples = 0;

    for (Eigen::Index start = 0; start < n; start += bs) {
      const auto b = std::min(bs, n - start);
      MatrixXd zb(b, d);
      for (Eigen::Index i = 0; i < b; ++i) zb.row(i) = z.row(perm[start + i]);

      if (use_ema_filter) {
        auto norms = row_norms(net.forward_ema(zb));
        auto keep = filter_survivors(norms, cfg.gamma);
        if (static_cast<Eigen::Index>(keep.size()) < b) {
          MatrixXd sub(static_cast<Eigen::Index>(keep.size()), d);
          for (std::size_t i = 0; i < keep.size(); ++i)
            sub.row(static_cast<Eigen::Index>(i)) = zb.row(keep[i]);
          zb = std::move(sub);
        }
      }

      MatrixXd eps(zb.rows(), d);
      for (Eigen::Index i = 0; i < eps.rows(); ++i)
        for (Eigen::Index j = 0; j < d; ++j) eps(i, j) = rng.normal();
      MatrixXd x_noisy = zb + eps * sigma.asDiagonal();

      auto [loss, grad] = net.loss_and_grad(x_noisy, eps, rng);
      if (!std::isfinite(loss))
        throw NumericError("fit: non-finite loss at epoch " + std::to_string(epoch));
      adam.step(net.mutable_params(), grad);
      if (use_ema_filter) net.ema_update(cfg.rho);

      epoch_loss += loss * static_cast<double>(zb.rows());
      epoch_samples += zb.rows();
    }
    loss_history.push_back(epoch_loss / static_cast<double>(epoch_samples));
  }

  return TrainedModel{std::move(net), std::move(plan), std::move(fs), cfg,
                      std::move(loss_history)};
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidInputError("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw InvalidInputError("TrainConfig: batch_size must be >= 1");
  if (!(lr > 0.0)) throw InvalidInputError("TrainConfig: lr must be > 0");
  if (!(gamma > 0.0 && gamma < 100.0) && gamma != 100.0)
    throw InvalidInputError("TrainConfig: gamma must be in (0, 100]");
  if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidInputError("TrainConfig: rho must be in [0,1]");
}

TrainedModel fit_dsm(const Eigen::MatrixXd& data, const TrainConfig& cfg) {
  return fit_impl(data, cfg, false);
}

TrainedModel fit_kdsm_ema(const Eigen::MatrixXd& data, const TrainConfig& cfg) {
  return fit_impl(data, cfg, true);
}

std::vector<int> filter_survivors(const std::vector<double>& teacher_norms, double gamma) {
  const auto b = teacher_norms.size();
  if (b == 0) throw InvalidInputError("filter_survivors: empty batch");
  auto rank = static_cast<std::size_t>(
      std::ceil(gamma * static_cast<double>(b) / 100.0));
  rank = std::clamp<std::size_t>(rank, 1, b);

  std::vector<double> sorted(teacher_norms);
  std::nth_element(sorted.begin(), sorted.begin() + (rank - 1), sorted.end());
  const double threshold = sorted[rank - 1];

  std::vector<int> keep;
  keep.reserve(b);
  for (std::size_t i = 0; i < b; ++i)
    if (teacher_norms[i] <= threshold) keep.push_back(static_cast<int>(i));
  if (keep.size() < 2) {
    keep.resize(b);
    for (std::size_t i = 0; i < b; ++i) keep[i] = static_cast<int>(i);
  }
  return keep;
}

std::vector<double> anomaly_score(const TrainedModel& model, const Eigen::MatrixXd& x_raw) {
  if (x_raw.cols() != static_cast<Eigen::Index>(model.feature_stats.size()))
    throw InvalidInputError("anomaly_score: feature count mismatch");
  MatrixXd z = standardize_matrix(x_raw, model.feature_stats);
  // One row per forward: identical inputs then give bit-identical scores
  // regardless of their position in the batch.
  std::vector<double> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    out[static_cast<std::size_t>(i)] = model.net.forward(z.row(i), nn::Mode::Eval).norm();
  return out;
}

std::vector<double> score_with_teacher(const TrainedModel& model, const Eigen::MatrixXd& x_raw) {
  if (!model.net.has_ema()) throw StateError("score_with_teacher: model has no EMA teacher");
  if (x_raw.cols() != static_cast<Eigen::Index>(model.feature_stats.size()))
    throw InvalidInputError("score_with_teacher: feature count mismatch");
  MatrixXd z = standardize_matrix(x_raw, model.feature_stats);
  std::vector<double> out(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i)
    out[static_cast<std::size_t>(i)] = model.net.forward_ema(z.row(i)).norm();
  return out;
}

std::string TrainConfig::to_json() const {
  nlohmann::ordered_json j;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["rule"] = noise::rule_name(noise.rule);
  j["sigma_base"] = noise.sigma_base;
  j["c"] = noise.c;
  j["clip"] = {noise.clip.lo, noise.clip.hi};
  if (noise.tau)
    j["tau"] = *noise.tau;
  else
    j["tau"] = nullptr;
  j["bins"] = noise.bins;
  j["ema_enabled"] = ema_enabled;
  j["rho"] = rho;
  j["gamma"] = gamma;
  j["seed"] = seed;
  j["arch"] = {{"input_dim", arch.input_dim},
               {"n_blocks", arch.n_blocks},
               {"main_width", arch.main_width},
               {"hidden_width", arch.hidden_width},
               {"dropout1", arch.dropout1},
               {"dropout2", arch.dropout2}};
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  TrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr = j.at("lr").get<double>();
  c.noise.rule = noise::rule_from_name(j.at("rule").get<std::string>());
  c.noise.sigma_base = j.at("sigma_base").get<double>();
  c.noise.c = j.at("c").get<double>();
  c.noise.clip.lo = j.at("clip").at(0).get<double>();
  c.noise.clip.hi = j.at("clip").at(1).get<double>();
  if (!j.at("tau").is_null()) c.noise.tau = j.at("tau").get<double>();
  c.noise.bins = j.at("bins").get<int>();
  c.ema_enabled = j.at("ema_enabled").get<bool>();
  c.rho = j.at("rho").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  const auto& a = j.at("arch");
  c.arch.input_dim = a.at("input_dim").get<int>();
  c.arch.n_blocks = a.at("n_blocks").get<int>();
  c.arch.main_width = a.at("main_width").get<int>();
  c.arch.hidden_width = a.at("hidden_width").get<int>();
  c.arch.dropout1 = a.at("dropout1").get<double>();
  c.arch.dropout2 = a.at("dropout2").get<double>();
  return c;
}

namespace {

nlohmann::ordered_json stats_to_json(const stats::FeatureStats& s) {
  return {{"mean", s.mean},           {"std", s.std},
          {"kurtosis_raw", s.kurtosis_raw}, {"kurtosis_rearranged", s.kurtosis_rearranged},
          {"iqr", s.iqr},             {"degenerate", s.degenerate}};
}

stats::FeatureStats stats_from_json(const nlohmann::json& j) {
  stats::FeatureStats s;
  s.mean = j.at("mean").get<double>();
  s.std = j.at("std").get<double>();
  s.kurtosis_raw = j.at("kurtosis_raw").get<double>();
  s.kurtosis_rearranged = j.at("kurtosis_rearranged").get<double>();
  s.iqr = j.at("iqr").get<double>();
  s.degenerate = j.at("degenerate").get<bool>();
  return s;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw InvalidInputError("cannot open for writing: " + p.string());
  os << text;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw InvalidInputError("cannot open: " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

void save_model(const TrainedModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nn::save_checkpoint(model.net, dir / "checkpoint.bin");
  write_file(dir / "noise_plan.json", model.plan.to_json() + "\n");
  write_file(dir / "config.json", model.config.to_json() + "\n");

  nlohmann::ordered_json fj = nlohmann::ordered_json::array();
  for (const auto& s : model.feature_stats) fj.push_back(stats_to_json(s));
  write_file(dir / "feature_stats.json", fj.dump(2) + "\n");

  std::ostringstream csv;
  csv << "epoch,loss\n";
  csv.precision(17);
  for (std::size_t i = 0; i < model.loss_history.size(); ++i)
    csv << i << "," << model.loss_history[i] << "\n";
  write_file(dir / "loss_history.csv", csv.str());
}

TrainedModel load_model(const std::filesystem::path& dir) {
  auto net = nn::load_checkpoint(dir / "checkpoint.bin");
  auto plan = noise::NoisePlan::from_json(read_file(dir / "noise_plan.json"));
  auto config = TrainConfig::from_json(read_file(dir / "config.json"));

  std::vector<stats::FeatureStats> fs;
  for (const auto& j : nlohmann::json::parse(read_file(dir / "feature_stats.json")))
    fs.push_back(stats_from_json(j));

  std::vector<double> losses;
  std::istringstream is(read_file(dir / "loss_history.csv"));
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    auto comma = line.find(',');
    if (comma != std::string::npos) losses.push_back(std::stod(line.substr(comma + 1)));
  }

  if (static_cast<Eigen::Index>(plan.sigmas.size()) != net.arch().input_dim ||
      fs.size() != plan.sigmas.size())
    throw InvalidInputError("load_model: inconsistent model directory " + dir.string());

  return TrainedModel{std::move(net), std::move(plan), std::move(fs), std::move(config),
                      std::move(losses)};
}

}  // namespace kdsm::train
