#include "kdsm/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace kdsm::io {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* b = s.data();
  const char* e = b + s.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc{} && p == e;
}

}  // namespace

CsvData read_csv(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw InvalidInputError("cannot open CSV file: " + file.string());

  std::vector<std::vector<double>> rows;
  CsvData data;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool saw_header = false;
  int label_col = -1;

  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);

    if (rows.empty() && !saw_header) {
      double tmp;
      bool numeric = true;
      for (const auto& c : cells)
        if (!parse_double(c, tmp)) { numeric = false; break; }
      if (!numeric) {
        saw_header = true;
        data.columns = cells;
        for (std::size_t j = 0; j < cells.size(); ++j)
          if (cells[j] == "label") label_col = static_cast<int>(j);
        width = cells.size();
        continue;
      }
    }

    if (width == 0) width = cells.size();
    if (cells.size() != width)
      throw InvalidInputError(file.string() + ": row " + std::to_string(line_no) + " has " +
                              std::to_string(cells.size()) + " columns, expected " +
                              std::to_string(width));
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (!parse_double(cells[j], row[j]))
        throw InvalidInputError(file.string() + ": row " + std::to_string(line_no) +
                                ", column " + std::to_string(j + 1) + ": '" + cells[j] +
                                "' is not a number");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidInputError(file.string() + ": no data rows");

  const auto n = rows.size();
  const auto n_features = width - (label_col >= 0 ? 1 : 0);
  if (n_features == 0) throw InvalidInputError(file.string() + ": no feature columns");

  data.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n_features));
  if (label_col >= 0) data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t out_j = 0;
    for (std::size_t j = 0; j < width; ++j) {
      if (static_cast<int>(j) == label_col) {
        double v = rows[i][j];
        if (v != 0.0 && v != 1.0)
          throw InvalidInputError(file.string() + ": row " + std::to_string(i + 1) +
                                  ": label must be 0 or 1, got " + std::to_string(v));
        data.labels[i] = static_cast<int>(v);
      } else {
        data.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(out_j++)) = rows[i][j];
      }
    }
  }
  if (!saw_header) {
    data.columns.resize(n_features);
    for (std::size_t j = 0; j < n_features; ++j) data.columns[j] = "f" + std::to_string(j);
  } else if (label_col >= 0) {
    data.columns.erase(data.columns.begin() + label_col);
  }
  return data;
}

void write_csv(const std::filesystem::path& file, const Eigen::MatrixXd& x,
               const std::vector<std::string>& header) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw InvalidInputError("cannot open for writing: " + file.string());
  os.precision(17);
  if (!header.empty()) {
    for (std::size_t j = 0; j < header.size(); ++j)
      os << (j ? "," : "") << header[j];
    os << "\n";
  }
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) os << (j ? "," : "") << x(i, j);
    os << "\n";
  }
}

void write_scores(const std::filesystem::path& file, const std::vector<double>& scores) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw InvalidInputError("cannot open for writing: " + file.string());
  os.precision(17);
  os << "score\n";
  for (double s : scores) os << s << "\n";
}

std::vector<double> read_scores(const std::filesystem::path& file) {
  auto csv = read_csv(file);
  if (csv.X.cols() != 1)
    throw InvalidInputError(file.string() + ": expected a single score column");
  return {csv.X.data(), csv.X.data() + csv.X.rows()};
}

std::vector<int> read_labels(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw InvalidInputError("cannot open: " + file.string());

  std::vector<int> out;
  std::string line;
  std::size_t line_no = 0;
  int label_col = -1;       // -1 until decided; single-column files use column 0
  std::size_t width = 0;
  bool saw_header = false;

  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line);

    if (out.empty() && !saw_header) {
      double tmp;
      bool numeric = true;
      for (const auto& c : cells)
        if (!parse_double(c, tmp)) { numeric = false; break; }
      if (!numeric) {
        saw_header = true;
        width = cells.size();
        for (std::size_t j = 0; j < cells.size(); ++j)
          if (cells[j] == "label") label_col = static_cast<int>(j);
        if (label_col < 0 && cells.size() != 1)
          throw InvalidInputError(file.string() +
                                  ": expected a 'label' column or a single label column");
        if (label_col < 0) label_col = 0;
        continue;
      }
    }
    if (width == 0) {
      width = cells.size();
      if (label_col < 0) {
        if (width != 1)
          throw InvalidInputError(file.string() +
                                  ": expected a 'label' column or a single label column");
        label_col = 0;
      }
    }
    if (cells.size() != width)
      throw InvalidInputError(file.string() + ": row " + std::to_string(line_no) +
                              " has inconsistent column count");
    double v;
    const auto& cell = cells[static_cast<std::size_t>(label_col)];
    if (!parse_double(cell, v) || (v != 0.0 && v != 1.0))
      throw InvalidInputError(file.string() + ": row " + std::to_string(line_no) +
                              ": label must be 0 or 1, got '" + cell + "'");
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) throw InvalidInputError(file.string() + ": no label rows");
  return out;
}

std::string file_digest(const std::filesystem::path& file) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw InvalidInputError("cannot open: " + file.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!is) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return out;
}

}  // namespace kdsm::io
