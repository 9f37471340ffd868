#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kdsm/common.hpp"

namespace kdsm::io {

/// Numeric CSV with an optional header row and an optional final column
/// named "label" holding 0/1.
struct CsvData {
  Eigen::MatrixXd X;
  std::vector<int> labels;              // empty when absent
  std::vector<std::string> columns;     // feature names (may be synthesized)
  bool has_labels() const { return !labels.empty(); }
};

CsvData read_csv(const std::filesystem::path& file);

void write_csv(const std::filesystem::path& file, const Eigen::MatrixXd& x,
               const std::vector<std::string>& header);

void write_scores(const std::filesystem::path& file, const std::vector<double>& scores);
std::vector<double> read_scores(const std::filesystem::path& file);

/// Labels from either a single-column file or a dataset CSV with a
/// "label" column.
std::vector<int> read_labels(const std::filesystem::path& file);

/// FNV-1a 64-bit digest of a file, as 16 hex characters.
std::string file_digest(const std::filesystem::path& file);

}  // namespace kdsm::io
