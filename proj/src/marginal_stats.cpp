#include "kdsm/marginal_stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace kdsm::stats {

namespace {

constexpr double kDegenerateTol = 1e-12;

void require_finite(const std::vector<double>& column, const char* op) {
  if (column.empty()) throw InvalidInputError(std::string(op) + ": empty column");
  for (std::size_t i = 0; i < column.size(); ++i) {
    if (!std::isfinite(column[i]))
      throw InvalidInputError(std::string(op) + ": non-finite value at index " +
                              std::to_string(i));
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Linear-interpolation quantile of a sorted vector, p in [0,1].
double sorted_quantile(const std::vector<double>& sorted, double p) {
  const auto n = sorted.size();
  double h = p * static_cast<double>(n - 1);
  auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo >= n - 1) return sorted.back();
  double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

Standardized standardize(const std::vector<double>& column) {
  require_finite(column, "standardize");
  const auto n = static_cast<double>(column.size());
  double mu = mean_of(column);
  double ss = 0.0;
  for (double x : column) {
    double d = x - mu;
    ss += d * d;
  }
  double sd = std::sqrt(ss / n);

  Standardized out;
  out.mean = mu;
  out.std = sd;
  out.values.resize(column.size());
  if (sd < kDegenerateTol) {
    out.degenerate = true;
    std::fill(out.values.begin(), out.values.end(), 0.0);
    return out;
  }
  for (std::size_t i = 0; i < column.size(); ++i) out.values[i] = (column[i] - mu) / sd;
  return out;
}

double pearson_kurtosis(const std::vector<double>& column) {
  require_finite(column, "pearson_kurtosis");
  if (column.size() < 4)
    throw InvalidInputError("pearson_kurtosis: need at least 4 samples");
  const auto n = static_cast<double>(column.size());
  double mu = mean_of(column);
  double m2 = 0.0, m4 = 0.0;
  for (double x : column) {
    double d = x - mu;
    double d2 = d * d;
    m2 += d2;
    m4 += d2 * d2;
  }
  m2 /= n;
  m4 /= n;
  if (std::sqrt(m2) < kDegenerateTol)
    throw DegenerateFeatureError("pearson_kurtosis: (near-)constant column");
  return m4 / (m2 * m2);
}

Histogram build_histogram(const std::vector<double>& column, int bins) {
  require_finite(column, "build_histogram");
  if (bins < 1) throw InvalidInputError("build_histogram: bins must be >= 1");

  auto [mn_it, mx_it] = std::minmax_element(column.begin(), column.end());
  double lo = *mn_it, hi = *mx_it;
  if (hi <= lo) hi = lo + 1.0;  // constant column: arbitrary unit-wide span

  Histogram h;
  h.edges.resize(bins + 1);
  const double width = (hi - lo) / bins;
  for (int k = 0; k <= bins; ++k) h.edges[k] = lo + width * k;
  h.edges[bins] = hi;
  h.counts.assign(bins, 0);
  h.bin_of.resize(column.size());

  for (std::size_t i = 0; i < column.size(); ++i) {
    double x = column[i];
    int idx = static_cast<int>(std::floor((x - lo) / width));
    idx = std::clamp(idx, 0, bins - 1);
    // Pin edge samples to the bin whose left edge they sit on.
    while (idx < bins - 1 && x >= h.edges[idx + 1]) ++idx;
    while (idx > 0 && x < h.edges[idx]) --idx;
    h.bin_of[i] = idx;
    ++h.counts[idx];
  }
  return h;
}

std::vector<int> symmetric_rank_codes(const std::vector<std::int64_t>& counts) {
  const auto b = counts.size();
  std::vector<std::size_t> order(b);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t l, std::size_t r) { return counts[l] > counts[r]; });

  std::vector<int> codes(b, 0);
  int s = 1;
  for (std::size_t j = 1; j < b; ++j) {
    // 1-based rank j+1: even ranks take +s, odd ranks take -s and advance s.
    if ((j + 1) % 2 == 0) {
      codes[order[j]] = s;
    } else {
      codes[order[j]] = -s;
      ++s;
    }
  }
  return codes;
}

std::vector<double> rearrange(const Histogram& h) {
  auto codes = symmetric_rank_codes(h.counts);
  std::vector<double> out(h.bin_of.size());
  for (std::size_t i = 0; i < h.bin_of.size(); ++i)
    out[i] = static_cast<double>(codes[h.bin_of[i]]);
  return out;
}

double rearranged_kurtosis(const std::vector<double>& column, int bins) {
  auto col = rearrange(build_histogram(column, bins));
  auto z = standardize(col);
  if (z.degenerate)
    throw DegenerateFeatureError("rearranged_kurtosis: all samples in one bin");
  return pearson_kurtosis(z.values);
}

double iqr(const std::vector<double>& column) {
  require_finite(column, "iqr");
  if (column.size() < 4) throw InvalidInputError("iqr: need at least 4 samples");
  std::vector<double> s(column);
  std::sort(s.begin(), s.end());
  return sorted_quantile(s, 0.75) - sorted_quantile(s, 0.25);
}

int freedman_diaconis_bins(const std::vector<double>& column) {
  require_finite(column, "freedman_diaconis_bins");
  auto [mn, mx] = std::minmax_element(column.begin(), column.end());
  double range = *mx - *mn;
  if (range <= 0.0 || column.size() < 4) return 1;
  double w = 2.0 * iqr(column) / std::cbrt(static_cast<double>(column.size()));
  if (w <= 0.0) return 1;
  return std::clamp(static_cast<int>(std::ceil(range / w)), 1, 512);
}

FeatureStats compute_feature_stats(const std::vector<double>& column, int bins) {
  require_finite(column, "compute_feature_stats");
  if (bins == 0) bins = freedman_diaconis_bins(column);
  if (bins < 1) throw InvalidInputError("compute_feature_stats: bins must be >= 0");

  FeatureStats fs;
  auto z = standardize(column);
  fs.mean = z.mean;
  fs.std = z.std;
  fs.degenerate = z.degenerate;
  if (fs.degenerate) return fs;  // kurtoses stay at the Gaussian anchor

  fs.kurtosis_raw = pearson_kurtosis(z.values);
  fs.iqr = iqr(z.values);
  try {
    fs.kurtosis_rearranged = rearranged_kurtosis(z.values, bins);
  } catch (const DegenerateFeatureError&) {
    fs.kurtosis_rearranged = 3.0;  // every sample in one bin
  }
  return fs;
}

}  // namespace kdsm::stats
