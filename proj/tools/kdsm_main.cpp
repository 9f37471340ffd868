#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "kdsm/csv.hpp"
#include "kdsm/eval_metrics.hpp"
#include "kdsm/theory.hpp"
#include "kdsm/training.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInputError = 2;
constexpr int kExitNumericError = 3;
constexpr int kExitTheoryFailure = 4;

/// Relative output paths resolve under $KDSM_OUT_DIR when it is set.
fs::path resolve_output(const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return p;
  if (const char* base = std::getenv("KDSM_OUT_DIR")) return fs::path(base) / p;
  return p;
}

fs::path manifest_path_for(const fs::path& output_file) {
  return output_file.parent_path() / (output_file.stem().string() + ".manifest.json");
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Flat key=value config layering with precedence flag > file > default:
/// a file value is applied only when the option was absent on the command
/// line.
class ConfigBinder {
 public:
  template <typename T>
  void bind(CLI::Option* opt, const std::string& key, T& var) {
    entries_[key] = {opt, [&var](const std::string& text) { var = parse_as<T>(text); }};
  }

  void apply(const fs::path& file) const {
    std::ifstream is(file);
    if (!is) throw kdsm::InvalidInputError("cannot open config file: " + file.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      auto text = trim(line);
      if (text.empty() || text[0] == '#') continue;
      auto eq = text.find('=');
      if (eq == std::string::npos)
        throw kdsm::InvalidInputError(file.string() + ":" + std::to_string(line_no) +
                                      ": expected key=value");
      auto key = trim(text.substr(0, eq));
      auto value = trim(text.substr(eq + 1));
      auto it = entries_.find(key);
      if (it == entries_.end())
        throw kdsm::InvalidInputError(file.string() + ":" + std::to_string(line_no) +
                                      ": unknown key '" + key + "'");
      if (it->second.opt->count() == 0) it->second.set(value);
    }
  }

 private:
  struct Entry {
    CLI::Option* opt;
    std::function<void(const std::string&)> set;
  };

  template <typename T>
  static T parse_as(const std::string& text);

  std::map<std::string, Entry> entries_;
};

template <>
double ConfigBinder::parse_as<double>(const std::string& text) {
  return std::stod(text);
}
template <>
int ConfigBinder::parse_as<int>(const std::string& text) {
  return std::stoi(text);
}
template <>
std::uint64_t ConfigBinder::parse_as<std::uint64_t>(const std::string& text) {
  return std::stoull(text);
}
template <>
std::string ConfigBinder::parse_as<std::string>(const std::string& text) {
  return text;
}
template <>
bool ConfigBinder::parse_as<bool>(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw kdsm::InvalidInputError("expected a boolean, got '" + text + "'");
}

/// Collects inputs/outputs and writes the per-run manifest.
class RunManifest {
 public:
  RunManifest(std::string command, std::uint64_t seed)
      : command_(std::move(command)), seed_(seed), start_(std::chrono::steady_clock::now()) {}

  void add_input(const fs::path& p) { inputs_.push_back(p); }
  void add_output(const fs::path& p) { outputs_.push_back(p); }
  void set_config(ordered_json cfg) { config_ = std::move(cfg); }

  void write(const fs::path& file) {
    ordered_json j;
    j["command"] = command_;
    j["config"] = config_;
    j["seed"] = seed_;
    j["inputs"] = ordered_json::array();
    for (const auto& p : inputs_)
      j["inputs"].push_back({{"path", p.string()}, {"digest", kdsm::io::file_digest(p)}});
    j["outputs"] = ordered_json::array();
    for (const auto& p : outputs_)
      j["outputs"].push_back({{"path", p.string()}, {"digest", kdsm::io::file_digest(p)}});
    auto dur = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_);
    j["duration_seconds"] = dur.count();
    std::ofstream os(file, std::ios::binary);
    if (!os) throw kdsm::InvalidInputError("cannot write manifest: " + file.string());
    os << j.dump(2) << "\n";
  }

 private:
  std::string command_;
  ordered_json config_;
  std::uint64_t seed_;
  std::vector<fs::path> inputs_, outputs_;
  std::chrono::steady_clock::time_point start_;
};

struct NoiseFlags {
  std::string rule = "cf";
  double sigma_base = 0.5;
  double c = 0.33;
  double clip_min = 0.1;
  double clip_max = 2.0;
  double tau = -1.0;  // < 0 means unset
  int bins = 64;

  void attach(CLI::App* cmd, ConfigBinder& binder) {
    binder.bind(cmd->add_option("--rule", rule, "Noise rule: cf|ggd|iqr|global"), "rule", rule);
    binder.bind(cmd->add_option("--sigma-base", sigma_base, "Base noise scale"), "sigma-base",
                sigma_base);
    binder.bind(cmd->add_option("--c", c, "Kurtosis sensitivity of the affine rule"), "c", c);
    binder.bind(cmd->add_option("--clip-min", clip_min, "Lower sigma clip"), "clip-min",
                clip_min);
    binder.bind(cmd->add_option("--clip-max", clip_max, "Upper sigma clip"), "clip-max",
                clip_max);
    binder.bind(cmd->add_option("--tau", tau, "Tail level for the ggd rule"), "tau", tau);
    binder.bind(cmd->add_option("--bins", bins, "Histogram bins for kurtosis (0 = auto)"),
                "bins", bins);
  }

  kdsm::noise::NoiseConfig to_config() const {
    kdsm::noise::NoiseConfig cfg;
    cfg.rule = kdsm::noise::rule_from_name(rule);
    cfg.sigma_base = sigma_base;
    cfg.c = c;
    cfg.clip = {clip_min, clip_max};
    if (tau >= 0.0) cfg.tau = tau;
    cfg.bins = bins;
    return cfg;
  }

  ordered_json snapshot() const {
    ordered_json j;
    j["rule"] = rule;
    j["sigma_base"] = sigma_base;
    j["c"] = c;
    j["clip"] = {clip_min, clip_max};
    if (tau >= 0.0)
      j["tau"] = tau;
    else
      j["tau"] = nullptr;
    j["bins"] = bins;
    return j;
  }
};

std::vector<kdsm::stats::FeatureStats> stats_for_matrix(const Eigen::MatrixXd& x, int bins) {
  std::vector<kdsm::stats::FeatureStats> fs;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    std::vector<double> col(x.col(j).data(), x.col(j).data() + x.rows());
    fs.push_back(kdsm::stats::compute_feature_stats(col, bins));
  }
  return fs;
}

int cmd_sigmas(const std::string& input, const std::string& output, const NoiseFlags& flags) {
  RunManifest manifest("sigmas", 0);
  manifest.set_config(flags.snapshot());
  manifest.add_input(input);

  auto csv = kdsm::io::read_csv(input);
  auto cfg = flags.to_config();
  auto plan = kdsm::noise::make_noise_plan(stats_for_matrix(csv.X, cfg.bins), cfg);

  if (cfg.rule == kdsm::noise::Rule::GgdExact && plan.tau && *plan.tau > 0.02)
    std::cerr << "warning: tau above the strictly monotone tail regime (~0.02)\n";

  auto out_path = resolve_output(output);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  {
    std::ofstream os(out_path, std::ios::binary);
    if (!os) throw kdsm::InvalidInputError("cannot write: " + out_path.string());
    os << plan.to_json() << "\n";
  }
  manifest.add_output(out_path);
  manifest.write(manifest_path_for(out_path));

  std::cout << "wrote " << out_path.string() << " (" << plan.sigmas.size() << " features)\n";
  return kExitOk;
}

int cmd_train(const std::string& input, const std::string& output, const NoiseFlags& noise,
              kdsm::train::TrainConfig cfg, bool unsupervised) {
  cfg.noise = noise.to_config();
  RunManifest manifest("train", cfg.seed);
  manifest.add_input(input);

  auto csv = kdsm::io::read_csv(input);
  Eigen::MatrixXd data = csv.X;  // a label column, when present, is never used

  if (unsupervised) {
    // Bootstrap resample of all rows at the native contamination rate.
    // Salted so the draw stream differs from the weight-init stream.
    kdsm::Rng rng(cfg.seed ^ 0xB00757A900000000ULL);
    Eigen::MatrixXd boot(data.rows(), data.cols());
    for (Eigen::Index i = 0; i < data.rows(); ++i)
      boot.row(i) =
          data.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(data.rows()))));
    data = std::move(boot);
  }

  auto model = cfg.ema_enabled ? kdsm::train::fit_kdsm_ema(data, cfg)
                               : kdsm::train::fit_dsm(data, cfg);

  auto out_dir = resolve_output(output);
  kdsm::train::save_model(model, out_dir);
  manifest.set_config(ordered_json::parse(model.config.to_json()));
  for (const char* f : {"checkpoint.bin", "noise_plan.json", "feature_stats.json", "config.json",
                        "loss_history.csv"})
    manifest.add_output(out_dir / f);
  manifest.write(out_dir / "run_manifest.json");

  std::cout << "trained " << (model.config.ema_enabled ? "kdsm-ema" : "dsm") << " model on "
            << data.rows() << "x" << data.cols() << ", final epoch loss "
            << model.loss_history.back() << "\n"
            << "wrote " << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_score(const std::string& model_dir, const std::string& input, const std::string& output,
              bool teacher) {
  RunManifest manifest("score", 0);
  auto model = kdsm::train::load_model(model_dir);
  manifest.add_input(input);
  manifest.add_input(fs::path(model_dir) / "checkpoint.bin");

  auto csv = kdsm::io::read_csv(input);
  auto scores = teacher ? kdsm::train::score_with_teacher(model, csv.X)
                        : kdsm::train::anomaly_score(model, csv.X);

  auto out_path = resolve_output(output);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  kdsm::io::write_scores(out_path, scores);
  manifest.add_output(out_path);
  ordered_json cfg;
  cfg["model"] = model_dir;
  cfg["teacher"] = teacher;
  manifest.set_config(cfg);
  manifest.write(manifest_path_for(out_path));

  std::cout << "wrote " << out_path.string() << " (" << scores.size() << " scores)\n";
  return kExitOk;
}

int cmd_eval(const std::string& scores_file, const std::string& labels_file,
             const std::string& output, std::uint64_t seed, const std::string& split) {
  RunManifest manifest("eval", seed);
  manifest.add_input(scores_file);
  manifest.add_input(labels_file);

  auto scores = kdsm::io::read_scores(scores_file);
  auto labels = kdsm::io::read_labels(labels_file);
  auto report = kdsm::eval::evaluate(scores, labels, seed, split);

  auto out_path = resolve_output(output);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  {
    std::ofstream os(out_path, std::ios::binary);
    if (!os) throw kdsm::InvalidInputError("cannot write: " + out_path.string());
    os << report.to_json() << "\n";
  }
  ordered_json cfg;
  cfg["split"] = split;
  manifest.set_config(cfg);
  manifest.add_output(out_path);
  manifest.write(manifest_path_for(out_path));

  std::cout << "auc_pr=" << report.auc_pr << " auc_roc=" << report.auc_roc << " f1=" << report.f1
            << "\n"
            << "wrote " << out_path.string() << "\n";
  return kExitOk;
}

struct TheoryFlags {
  std::string tau_grid = "0.001,0.01,0.02";
  std::string kappa_grid = "2:30:50";
  std::string nu_grid = "4.5:100:50";
  std::string alpha_grid = "0.1,0.3,0.5";
};

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
  if (out.empty()) throw kdsm::InvalidInputError("empty grid: " + s);
  return out;
}

void parse_range(const std::string& s, double& lo, double& hi, int& n) {
  std::stringstream ss(s);
  std::string a, b, c;
  if (!std::getline(ss, a, ':') || !std::getline(ss, b, ':') || !std::getline(ss, c))
    throw kdsm::InvalidInputError("expected lo:hi:count, got " + s);
  lo = std::stod(a);
  hi = std::stod(b);
  n = std::stoi(c);
  if (!(lo < hi) || n < 2) throw kdsm::InvalidInputError("bad range: " + s);
}

int cmd_theory_check(const TheoryFlags& flags, const std::string& output) {
  kdsm::theory::Grids grids;
  grids.taus = parse_list(flags.tau_grid);
  parse_range(flags.kappa_grid, grids.kappa_lo, grids.kappa_hi, grids.kappa_points);
  parse_range(flags.nu_grid, grids.nu_lo, grids.nu_hi, grids.nu_points);
  grids.alphas = parse_list(flags.alpha_grid);

  for (double t : grids.taus)
    if (!(t > 0.0 && t < 0.5)) throw kdsm::InvalidInputError("tau grid outside (0, 0.5)");
  if (grids.kappa_lo < 1.9 || grids.kappa_hi > 50.0)
    throw kdsm::InvalidInputError("kappa grid outside [1.9, 50]");
  if (grids.nu_lo <= 4.0) throw kdsm::InvalidInputError("nu grid requires nu > 4");
  for (double a : grids.alphas)
    if (!(a > 0.0 && a < 1.0)) throw kdsm::InvalidInputError("alpha grid outside (0,1)");

  RunManifest manifest("theory-check", 0);
  ordered_json cfg;
  cfg["tau_grid"] = grids.taus;
  cfg["kappa_grid"] = flags.kappa_grid;
  cfg["nu_grid"] = flags.nu_grid;
  cfg["alpha_grid"] = grids.alphas;
  manifest.set_config(cfg);

  auto results = kdsm::theory::run_all(grids);
  for (const auto& r : results) std::cout << (r.passed ? "[PASS] " : "[FAIL] ") << r.name << "\n";

  auto out_path = resolve_output(output);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  {
    std::ofstream os(out_path, std::ios::binary);
    if (!os) throw kdsm::InvalidInputError("cannot write: " + out_path.string());
    os << kdsm::theory::report_json(results) << "\n";
  }
  manifest.add_output(out_path);
  manifest.write(manifest_path_for(out_path));

  bool ok = kdsm::theory::all_passed(results);
  std::cout << (ok ? "all checks passed" : "some checks FAILED") << ", report at "
            << out_path.string() << "\n";
  return ok ? kExitOk : kExitTheoryFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kurtosis-guided denoising score matching for tabular anomaly detection"};
  app.require_subcommand(1);

  auto* sigmas = app.add_subcommand("sigmas", "Compute a per-feature noise plan from a CSV");
  ConfigBinder sigmas_binder;
  std::string sigmas_input, sigmas_output = "noise_plan.json", sigmas_config;
  NoiseFlags sigmas_noise;
  sigmas->add_option("--input", sigmas_input, "Input CSV")->required();
  sigmas_binder.bind(sigmas->add_option("--output", sigmas_output, "Output noise plan JSON"),
                     "output", sigmas_output);
  sigmas_noise.attach(sigmas, sigmas_binder);
  sigmas->add_option("--config", sigmas_config, "Flat key=value config file");

  auto* train = app.add_subcommand("train", "Train a score network");
  ConfigBinder train_binder;
  std::string train_input, train_output = "model", train_config;
  NoiseFlags train_noise;
  kdsm::train::TrainConfig tc;
  bool ema = false, unsupervised = false;
  train->add_option("--input", train_input, "Training CSV (label column ignored)")->required();
  train_binder.bind(train->add_option("--output", train_output, "Model output directory"),
                    "output", train_output);
  train_binder.bind(train->add_option("--epochs", tc.epochs, "Training epochs"), "epochs",
                    tc.epochs);
  train_binder.bind(train->add_option("--batch-size", tc.batch_size, "Minibatch size"),
                    "batch-size", tc.batch_size);
  train_binder.bind(train->add_option("--lr", tc.lr, "Adam learning rate"), "lr", tc.lr);
  train_binder.bind(train->add_flag("--ema,!--no-ema", ema, "EMA-teacher batch filtering"),
                    "ema", ema);
  train_binder.bind(train->add_option("--gamma", tc.gamma, "Filter percentile in (0, 100]"),
                    "gamma", tc.gamma);
  train_binder.bind(train->add_option("--rho", tc.rho, "EMA decay"), "rho", tc.rho);
  train_binder.bind(train->add_option("--seed", tc.seed, "Run seed"), "seed", tc.seed);
  train_binder.bind(
      train->add_flag("--unsupervised", unsupervised, "Bootstrap-resample the input rows"),
      "unsupervised", unsupervised);
  train_binder.bind(train->add_option("--blocks", tc.arch.n_blocks, "Residual blocks"), "blocks",
                    tc.arch.n_blocks);
  train_binder.bind(train->add_option("--main-width", tc.arch.main_width, "Main layer width"),
                    "main-width", tc.arch.main_width);
  train_binder.bind(
      train->add_option("--hidden-width", tc.arch.hidden_width, "Hidden layer width"),
      "hidden-width", tc.arch.hidden_width);
  train_binder.bind(train->add_option("--dropout1", tc.arch.dropout1, "First dropout rate"),
                    "dropout1", tc.arch.dropout1);
  train_binder.bind(train->add_option("--dropout2", tc.arch.dropout2, "Second dropout rate"),
                    "dropout2", tc.arch.dropout2);
  train_noise.attach(train, train_binder);
  train->add_option("--config", train_config, "Flat key=value config file");

  auto* score = app.add_subcommand("score", "Score samples with a trained model");
  ConfigBinder score_binder;
  std::string score_model, score_input, score_output = "scores.csv", score_config;
  bool use_teacher = false;
  score->add_option("--model", score_model, "Model directory")->required();
  score->add_option("--input", score_input, "Input CSV")->required();
  score_binder.bind(score->add_option("--output", score_output, "Output scores CSV"), "output",
                    score_output);
  score_binder.bind(score->add_flag("--teacher", use_teacher, "Score through the EMA teacher"),
                    "teacher", use_teacher);
  score->add_option("--config", score_config, "Flat key=value config file");

  auto* eval = app.add_subcommand("eval", "Compute ranking metrics from scores and labels");
  ConfigBinder eval_binder;
  std::string eval_scores, eval_labels, eval_output = "report.json", eval_config;
  std::string eval_split = "external";
  std::uint64_t eval_seed = 0;
  eval->add_option("--scores", eval_scores, "Scores CSV (column 'score')")->required();
  eval->add_option("--labels", eval_labels, "Labels CSV ('label' column or single column)")
      ->required();
  eval_binder.bind(eval->add_option("--output", eval_output, "Output report JSON"), "output",
                   eval_output);
  eval_binder.bind(eval->add_option("--seed", eval_seed, "Seed recorded in the report"), "seed",
                   eval_seed);
  eval_binder.bind(
      eval->add_option("--split", eval_split, "Split descriptor recorded in the report"),
      "split", eval_split);
  eval->add_option("--config", eval_config, "Flat key=value config file");

  auto* theory = app.add_subcommand("theory-check", "Run the numeric theory verifications");
  ConfigBinder theory_binder;
  TheoryFlags tf;
  std::string theory_output = "theory_report.json", theory_config;
  theory_binder.bind(theory->add_option("--tau-grid", tf.tau_grid, "Comma list of tail levels"),
                     "tau-grid", tf.tau_grid);
  theory_binder.bind(
      theory->add_option("--kappa-grid", tf.kappa_grid, "Kurtosis grid lo:hi:count"),
      "kappa-grid", tf.kappa_grid);
  theory_binder.bind(
      theory->add_option("--nu-grid", tf.nu_grid, "Degrees-of-freedom grid lo:hi:count"),
      "nu-grid", tf.nu_grid);
  theory_binder.bind(
      theory->add_option("--alpha-grid", tf.alpha_grid, "Comma list of coverage levels"),
      "alpha-grid", tf.alpha_grid);
  theory_binder.bind(theory->add_option("--output", theory_output, "Output report JSON"),
                     "output", theory_output);
  theory->add_option("--config", theory_config, "Flat key=value config file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInputError;
  }

  try {
    if (*sigmas) {
      if (!sigmas_config.empty()) sigmas_binder.apply(sigmas_config);
      return cmd_sigmas(sigmas_input, sigmas_output, sigmas_noise);
    }
    if (*train) {
      if (!train_config.empty()) train_binder.apply(train_config);
      tc.ema_enabled = ema;
      return cmd_train(train_input, train_output, train_noise, tc, unsupervised);
    }
    if (*score) {
      if (!score_config.empty()) score_binder.apply(score_config);
      return cmd_score(score_model, score_input, score_output, use_teacher);
    }
    if (*eval) {
      if (!eval_config.empty()) eval_binder.apply(eval_config);
      return cmd_eval(eval_scores, eval_labels, eval_output, eval_seed, eval_split);
    }
    if (*theory) {
      if (!theory_config.empty()) theory_binder.apply(theory_config);
      return cmd_theory_check(tf, theory_output);
    }
  } catch (const kdsm::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumericError;
  } catch (const kdsm::DomainError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitInputError;
  }
  return kExitOk;
}
