#include "kdsm/neural.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace kdsm::nn {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Map = Eigen::Map<MatrixXd>;
using CMap = Eigen::Map<const MatrixXd>;
using VMap = Eigen::Map<VectorXd>;
using CVMap = Eigen::Map<const VectorXd>;

// Flat layout: stem W,b | per block W1,b1,W2,b2 | head W,b. Matrices are
// stored column-major as (in x out).
struct Layout {
  std::int64_t stem_w, stem_b;
  std::vector<std::int64_t> blk;  // 4 offsets per block
  std::int64_t head_w, head_b;
  std::int64_t total;

  explicit Layout(const Architecture& a) {
    std::int64_t off = 0;
    auto take = [&off](std::int64_t n) { auto o = off; off += n; return o; };
    stem_w = take(static_cast<std::int64_t>(a.input_dim) * a.main_width);
    stem_b = take(a.main_width);
    for (int b = 0; b < a.n_blocks; ++b) {
      blk.push_back(take(static_cast<std::int64_t>(a.main_width) * a.hidden_width));
      blk.push_back(take(a.hidden_width));
      blk.push_back(take(static_cast<std::int64_t>(a.hidden_width) * a.main_width));
      blk.push_back(take(a.main_width));
    }
    head_w = take(static_cast<std::int64_t>(a.main_width) * a.input_dim);
    head_b = take(a.input_dim);
    total = off;
  }
};

struct Cache {
  std::vector<MatrixXd> h_in;   // block inputs
  std::vector<MatrixXd> a;      // pre-activations
  std::vector<MatrixXd> r1;     // post ReLU + dropout1 (input of the second linear)
  std::vector<MatrixXd> m1, m2; // inverted-dropout masks (empty in eval)
  MatrixXd h_final;
};

MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  MatrixXd m(rows, cols);
  const double scale = 1.0 / (1.0 - rate);
  double* p = m.data();
  for (Eigen::Index i = 0; i < m.size(); ++i)
    p[i] = (rng.uniform() >= rate) ? scale : 0.0;
  return m;
}

MatrixXd forward_impl(const Architecture& arch, const Layout& lay, const double* theta,
                      const MatrixXd& x, Mode mode, Rng* rng, Cache* cache) {
  if (x.cols() != arch.input_dim)
    throw InvalidInputError("forward: expected " + std::to_string(arch.input_dim) +
                            " features, got " + std::to_string(x.cols()));
  const bool drop =
      mode == Mode::Train && (arch.dropout1 > 0.0 || arch.dropout2 > 0.0);
  if (drop && rng == nullptr)
    throw InvalidInputError("forward: train mode with dropout requires a seed");

  CMap stem_w(theta + lay.stem_w, arch.input_dim, arch.main_width);
  CVMap stem_b(theta + lay.stem_b, arch.main_width);

  MatrixXd h = (x * stem_w).rowwise() + stem_b.transpose();
  for (int b = 0; b < arch.n_blocks; ++b) {
    CMap w1(theta + lay.blk[4 * b + 0], arch.main_width, arch.hidden_width);
    CVMap b1(theta + lay.blk[4 * b + 1], arch.hidden_width);
    CMap w2(theta + lay.blk[4 * b + 2], arch.hidden_width, arch.main_width);
    CVMap b2(theta + lay.blk[4 * b + 3], arch.main_width);

    MatrixXd a = (h * w1).rowwise() + b1.transpose();
    MatrixXd r = a.cwiseMax(0.0);
    MatrixXd m1, m2;
    if (drop && arch.dropout1 > 0.0) {
      m1 = dropout_mask(r.rows(), r.cols(), arch.dropout1, *rng);
      r = r.cwiseProduct(m1);
    }
    MatrixXd o = (r * w2).rowwise() + b2.transpose();
    if (drop && arch.dropout2 > 0.0) {
      m2 = dropout_mask(o.rows(), o.cols(), arch.dropout2, *rng);
      o = o.cwiseProduct(m2);
    }
    if (cache) {
      cache->h_in.push_back(h);
      cache->a.push_back(std::move(a));
      cache->r1.push_back(std::move(r));
      cache->m1.push_back(std::move(m1));
      cache->m2.push_back(std::move(m2));
    }
    h += o;
  }
  if (cache) cache->h_final = h;

  CMap head_w(theta + lay.head_w, arch.main_width, arch.input_dim);
  CVMap head_b(theta + lay.head_b, arch.input_dim);
  return (h * head_w).rowwise() + head_b.transpose();
}

}  // namespace

void Architecture::validate() const {
  if (input_dim < 1) throw InvalidInputError("Architecture: input_dim must be >= 1");
  if (n_blocks < 1) throw InvalidInputError("Architecture: n_blocks must be >= 1");
  if (main_width < 1 || hidden_width < 1)
    throw InvalidInputError("Architecture: widths must be >= 1");
  if (!(dropout1 >= 0.0 && dropout1 < 1.0 && dropout2 >= 0.0 && dropout2 < 1.0))
    throw InvalidInputError("Architecture: dropout rates must be in [0,1)");
}

std::int64_t Architecture::param_count() const { return Layout(*this).total; }

ScoreNetwork::ScoreNetwork(Architecture arch, Eigen::VectorXd params)
    : arch_(arch), params_(std::move(params)) {
  arch_.validate();
  if (params_.size() != arch_.param_count())
    throw InvalidInputError("ScoreNetwork: parameter vector has wrong length");
  if (!params_.allFinite()) throw InvalidInputError("ScoreNetwork: non-finite parameters");
}

ScoreNetwork ScoreNetwork::init(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Layout lay(arch);
  VectorXd p = VectorXd::Zero(lay.total);
  Rng rng(seed);

  auto fill_linear = [&](std::int64_t w_off, std::int64_t b_off, int fan_in, std::int64_t n_w,
                         std::int64_t n_b) {
    const double lim = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::int64_t i = 0; i < n_w; ++i) p[w_off + i] = (2.0 * rng.uniform() - 1.0) * lim;
    for (std::int64_t i = 0; i < n_b; ++i) p[b_off + i] = (2.0 * rng.uniform() - 1.0) * lim;
  };

  fill_linear(lay.stem_w, lay.stem_b, arch.input_dim,
              static_cast<std::int64_t>(arch.input_dim) * arch.main_width, arch.main_width);
  for (int b = 0; b < arch.n_blocks; ++b) {
    fill_linear(lay.blk[4 * b + 0], lay.blk[4 * b + 1], arch.main_width,
                static_cast<std::int64_t>(arch.main_width) * arch.hidden_width,
                arch.hidden_width);
    fill_linear(lay.blk[4 * b + 2], lay.blk[4 * b + 3], arch.hidden_width,
                static_cast<std::int64_t>(arch.hidden_width) * arch.main_width,
                arch.main_width);
  }
  // Head stays zero.
  return ScoreNetwork(arch, std::move(p));
}

const Eigen::VectorXd& ScoreNetwork::ema_params() const {
  if (!has_ema()) throw StateError("ScoreNetwork: no EMA parameters");
  return ema_;
}

void ScoreNetwork::set_ema(Eigen::VectorXd ema) {
  if (ema.size() != params_.size())
    throw InvalidInputError("ScoreNetwork: EMA vector has wrong length");
  ema_ = std::move(ema);
}

void ScoreNetwork::ema_update(double rho) {
  if (!has_ema()) throw StateError("ScoreNetwork: EMA not initialised");
  if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidInputError("ema_update: rho must be in [0,1]");
  ema_ = rho * ema_ + (1.0 - rho) * params_;
}

Eigen::MatrixXd ScoreNetwork::forward(const Eigen::MatrixXd& x, Mode mode, Rng* rng) const {
  Layout lay(arch_);
  return forward_impl(arch_, lay, params_.data(), x, mode, rng, nullptr);
}

Eigen::MatrixXd ScoreNetwork::forward(const Eigen::MatrixXd& x, Mode mode,
                                      std::uint64_t dropout_seed) const {
  Rng rng(dropout_seed);
  return forward(x, mode, &rng);
}

Eigen::MatrixXd ScoreNetwork::forward_ema(const Eigen::MatrixXd& x) const {
  Layout lay(arch_);
  return forward_impl(arch_, lay, ema_params().data(), x, Mode::Eval, nullptr, nullptr);
}

std::pair<double, Eigen::VectorXd> ScoreNetwork::loss_and_grad(
    const Eigen::MatrixXd& x_noisy, const Eigen::MatrixXd& eps_target, Rng& rng) const {
  if (x_noisy.rows() != eps_target.rows() || x_noisy.cols() != eps_target.cols())
    throw InvalidInputError("loss_and_grad: x_noisy and eps_target shapes differ");

  Layout lay(arch_);
  Cache cache;
  MatrixXd out = forward_impl(arch_, lay, params_.data(), x_noisy, Mode::Train, &rng, &cache);

  const double batch = static_cast<double>(x_noisy.rows());
  MatrixXd resid = out + eps_target;
  double loss = 0.5 * resid.squaredNorm() / batch;

  VectorXd grad = VectorXd::Zero(lay.total);
  MatrixXd dout = resid / batch;

  Map(grad.data() + lay.head_w, arch_.main_width, arch_.input_dim).noalias() =
      cache.h_final.transpose() * dout;
  VMap(grad.data() + lay.head_b, arch_.input_dim) = dout.colwise().sum();

  CMap head_w(params_.data() + lay.head_w, arch_.main_width, arch_.input_dim);
  MatrixXd dh = dout * head_w.transpose();

  for (int b = arch_.n_blocks - 1; b >= 0; --b) {
    CMap w1(params_.data() + lay.blk[4 * b + 0], arch_.main_width, arch_.hidden_width);
    CMap w2(params_.data() + lay.blk[4 * b + 2], arch_.hidden_width, arch_.main_width);

    MatrixXd do2 = dh;  // gradient w.r.t. block output (pre residual add)
    if (cache.m2[b].size() != 0) do2 = do2.cwiseProduct(cache.m2[b]);

    Map(grad.data() + lay.blk[4 * b + 2], arch_.hidden_width, arch_.main_width).noalias() =
        cache.r1[b].transpose() * do2;
    VMap(grad.data() + lay.blk[4 * b + 3], arch_.main_width) = do2.colwise().sum();

    MatrixXd dr = do2 * w2.transpose();
    if (cache.m1[b].size() != 0) dr = dr.cwiseProduct(cache.m1[b]);
    MatrixXd da = (cache.a[b].array() > 0.0).cast<double>().matrix().cwiseProduct(dr);

    Map(grad.data() + lay.blk[4 * b + 0], arch_.main_width, arch_.hidden_width).noalias() =
        cache.h_in[b].transpose() * da;
    VMap(grad.data() + lay.blk[4 * b + 1], arch_.hidden_width) = da.colwise().sum();

    dh.noalias() += da * w1.transpose();
  }

  Map(grad.data() + lay.stem_w, arch_.input_dim, arch_.main_width).noalias() =
      x_noisy.transpose() * dh;
  VMap(grad.data() + lay.stem_b, arch_.main_width) = dh.colwise().sum();

  return {loss, std::move(grad)};
}

std::pair<double, Eigen::VectorXd> ScoreNetwork::loss_and_grad(
    const Eigen::MatrixXd& x_noisy, const Eigen::MatrixXd& eps_target,
    std::uint64_t dropout_seed) const {
  Rng rng(dropout_seed);
  return loss_and_grad(x_noisy, eps_target, rng);
}

AdamState::AdamState(std::int64_t n_params, double lr_)
    : m(VectorXd::Zero(n_params)), v(VectorXd::Zero(n_params)), lr(lr_) {}

void AdamState::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (params.size() != m.size() || grad.size() != m.size())
    throw InvalidInputError("AdamState::step: length mismatch");
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.array() -=
      lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

namespace {
constexpr char kMagic[8] = {'K', 'D', 'S', 'M', 'N', 'E', 'T', '\x01'};

template <typename T>
void write_pod(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}
}  // namespace

void save_checkpoint(const ScoreNetwork& net, const std::filesystem::path& file) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw InvalidInputError("save_checkpoint: cannot open " + file.string());
  os.write(kMagic, sizeof(kMagic));
  const auto& a = net.arch();
  write_pod<std::int64_t>(os, a.input_dim);
  write_pod<std::int64_t>(os, a.n_blocks);
  write_pod<std::int64_t>(os, a.main_width);
  write_pod<std::int64_t>(os, a.hidden_width);
  write_pod<double>(os, a.dropout1);
  write_pod<double>(os, a.dropout2);
  write_pod<std::int64_t>(os, net.params().size());
  write_pod<std::uint8_t>(os, net.has_ema() ? 1 : 0);
  os.write(reinterpret_cast<const char*>(net.params().data()),
           static_cast<std::streamsize>(net.params().size() * sizeof(double)));
  if (net.has_ema())
    os.write(reinterpret_cast<const char*>(net.ema_params().data()),
             static_cast<std::streamsize>(net.ema_params().size() * sizeof(double)));
  if (!os) throw NumericError("save_checkpoint: write failed for " + file.string());
}

ScoreNetwork load_checkpoint(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw InvalidInputError("load_checkpoint: cannot open " + file.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw InvalidInputError("load_checkpoint: bad format tag in " + file.string());
  Architecture a;
  a.input_dim = static_cast<int>(read_pod<std::int64_t>(is));
  a.n_blocks = static_cast<int>(read_pod<std::int64_t>(is));
  a.main_width = static_cast<int>(read_pod<std::int64_t>(is));
  a.hidden_width = static_cast<int>(read_pod<std::int64_t>(is));
  a.dropout1 = read_pod<double>(is);
  a.dropout2 = read_pod<double>(is);
  auto n = read_pod<std::int64_t>(is);
  auto has_ema = read_pod<std::uint8_t>(is);
  if (n != a.param_count())
    throw InvalidInputError("load_checkpoint: parameter count mismatch");
  VectorXd p(n);
  is.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(n * sizeof(double)));
  ScoreNetwork net(a, std::move(p));
  if (has_ema) {
    VectorXd e(n);
    is.read(reinterpret_cast<char*>(e.data()), static_cast<std::streamsize>(n * sizeof(double)));
    net.set_ema(std::move(e));
  }
  if (!is) throw InvalidInputError("load_checkpoint: truncated file " + file.string());
  return net;
}

}  // namespace kdsm::nn
