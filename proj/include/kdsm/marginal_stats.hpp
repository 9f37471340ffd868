#pragma once

#include <cstdint>
#include <vector>

#include "kdsm/common.hpp"

namespace kdsm::stats {

/// Equal-width histogram over [min, max] with per-sample bin assignment.
/// Samples landing exactly on an interior edge belong to the bin on the
/// right of that edge; the maximum belongs to the last bin.
struct Histogram {
  std::vector<double> edges;          // B+1, strictly increasing
  std::vector<std::int64_t> counts;   // B, sums to sample count
  std::vector<std::int32_t> bin_of;   // per-sample bin index in [0, B)
};

/// Per-feature summary driving the noise-scale rules. Kurtoses of a
/// degenerate (constant) column are pinned to the Gaussian value 3 so the
/// sigma rules stay neutral there.
struct FeatureStats {
  double mean = 0.0;
  double std = 0.0;                 // population standard deviation
  double kurtosis_raw = 3.0;
  double kurtosis_rearranged = 3.0;
  double iqr = 0.0;                 // of the standardized column
  bool degenerate = false;
};

struct Standardized {
  std::vector<double> values;
  double mean = 0.0;
  double std = 0.0;
  bool degenerate = false;
};

/// Shift/scale a column to population mean 0, std 1. Columns with
/// std < 1e-12 come back as all zeros with the degenerate flag set.
Standardized standardize(const std::vector<double>& column);

/// Fourth standardized central moment m4/m2^2 (population moments).
/// Throws DegenerateFeatureError when the column is (near-)constant.
double pearson_kurtosis(const std::vector<double>& column);

Histogram build_histogram(const std::vector<double>& column, int bins);

/// Codes 0, +1, -1, +2, -2, ... assigned to bins in decreasing-count order
/// (ties broken by lower bin index). Exactly one bin receives 0.
std::vector<int> symmetric_rank_codes(const std::vector<std::int64_t>& counts);

/// Map every sample to its bin's symmetric rank code.
std::vector<double> rearrange(const Histogram& h);

/// pearson_kurtosis(standardize(rearrange(build_histogram(column, bins)))).
double rearranged_kurtosis(const std::vector<double>& column, int bins);

/// Q75 - Q25 with linear-interpolation quantiles; needs >= 4 samples.
double iqr(const std::vector<double>& column);

/// Freedman-Diaconis bin count, clamped to [1, 512]. Used when a caller
/// passes bins = 0.
int freedman_diaconis_bins(const std::vector<double>& column);

/// Full per-feature summary. bins = 0 selects the Freedman-Diaconis count.
FeatureStats compute_feature_stats(const std::vector<double>& column, int bins);

}  // namespace kdsm::stats
