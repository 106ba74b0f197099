#include "msb/dataio.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "binio.hpp"
#include "msb/error.hpp"

namespace msb {

namespace {

constexpr std::string_view kDatasetMagic = "MSBD";
constexpr std::uint32_t kDatasetVersion = 1;
constexpr double kDegenerateSd = 1e-12;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

// Parses a comma-separated numeric table; every row must have the same width.
std::vector<std::vector<double>> read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    std::vector<double> row;
    std::size_t col = 0;
    while (true) {
      const std::size_t comma = view.find(',');
      std::string_view cell = trim(view.substr(0, comma));
      ++col;
      double value = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw DataError(path.string() + ": row " + std::to_string(line_no) + ", column " +
                        std::to_string(col) + ": cannot parse \"" + std::string(cell) + "\"");
      }
      if (!std::isfinite(value)) {
        throw DataError(path.string() + ": row " + std::to_string(line_no) + ", column " +
                        std::to_string(col) + ": non-finite value \"" + std::string(cell) + "\"");
      }
      row.push_back(value);
      if (comma == std::string_view::npos) break;
      view.remove_prefix(comma + 1);
    }
    if (rows.empty()) {
      width = row.size();
    } else if (row.size() != width) {
      throw DataError(path.string() + ": row " + std::to_string(line_no) + " has " +
                      std::to_string(row.size()) + " columns, expected " + std::to_string(width));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path.string() + ": no data rows");
  return rows;
}

void write_number(std::ostream& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.write(buf, res.ptr - buf);
}

void check_finite(const Matrix& m, const std::string& what) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (!std::isfinite(m(i, j))) {
        throw DataError(what + ": non-finite value at row " + std::to_string(i + 1) + ", column " +
                        std::to_string(j + 1));
      }
    }
  }
}

Matrix read_matrix_block(std::istream& in, const std::string& what) {
  binio::expect_magic(in, kDatasetMagic, what);
  const std::uint32_t version = binio::read_u32(in, what);
  if (version != kDatasetVersion) {
    throw DataError(what + ": unsupported dataset version " + std::to_string(version) + " (expected " +
                    std::to_string(kDatasetVersion) + ")");
  }
  const std::uint64_t n = binio::read_u64(in, what);
  const std::uint64_t p = binio::read_u64(in, what);
  if (n == 0 || p == 0) throw DataError(what + ": header declares an empty matrix");
  if (n > (std::uint64_t{1} << 40) / p) throw DataError(what + ": header dimensions too large");
  Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  binio::read_f64_block(in, m.data(), n * p, what + " matrix body");
  return m;
}

void write_matrix_block(std::ostream& out, const Matrix& m) {
  binio::write_magic(out, kDatasetMagic);
  binio::write_u32(out, kDatasetVersion);
  binio::write_u64(out, static_cast<std::uint64_t>(m.rows()));
  binio::write_u64(out, static_cast<std::uint64_t>(m.cols()));
  binio::write_f64_block(out, m.data(), static_cast<std::size_t>(m.size()));
}

Matrix table_to_matrix(const std::vector<std::vector<double>>& rows, std::size_t cols) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

}  // namespace

void Dataset::validate() const {
  if (features.rows() == 0 || features.cols() == 0) throw DataError("dataset is empty");
  if (responses.size() != features.rows()) {
    throw DataError("dataset has " + std::to_string(features.rows()) + " feature rows but " +
                    std::to_string(responses.size()) + " responses");
  }
  check_finite(features, "features");
  for (Eigen::Index i = 0; i < responses.size(); ++i) {
    if (!std::isfinite(responses[i])) throw DataError("responses: non-finite value at row " + std::to_string(i + 1));
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.responses.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.features.row(static_cast<Eigen::Index>(k)) = features.row(static_cast<Eigen::Index>(rows[k]));
    out.responses[static_cast<Eigen::Index>(k)] = responses[static_cast<Eigen::Index>(rows[k])];
  }
  return out;
}

Dataset Dataset::without_row(std::size_t row) const {
  std::vector<std::size_t> keep;
  keep.reserve(n() - 1);
  for (std::size_t i = 0; i < n(); ++i)
    if (i != row) keep.push_back(i);
  return subset(keep);
}

Format format_for_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? Format::csv : Format::bin;
}

Dataset load_dataset(const std::filesystem::path& path, Format format) {
  Dataset data;
  if (format == Format::csv) {
    const auto rows = read_csv_table(path);
    const std::size_t width = rows.front().size();
    if (width < 2) throw DataError(path.string() + ": need at least one feature column and a response column");
    data.features = table_to_matrix(rows, width - 1);
    data.responses.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) data.responses[static_cast<Eigen::Index>(i)] = rows[i][width - 1];
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    const std::string what = path.string();
    data.features = read_matrix_block(in, what);
    const std::uint64_t n = binio::read_u64(in, what + " response block");
    if (n != static_cast<std::uint64_t>(data.features.rows())) {
      throw DataError(what + ": response block has " + std::to_string(n) + " entries, expected " +
                      std::to_string(data.features.rows()));
    }
    data.responses.resize(static_cast<Eigen::Index>(n));
    binio::read_f64_block(in, data.responses.data(), n, what + " response block");
  }
  data.validate();
  return data;
}

Dataset load_dataset(const std::filesystem::path& features_path, const std::filesystem::path& responses_path,
                     Format format) {
  Dataset data;
  data.features = load_matrix(features_path, format);
  const Matrix y = load_matrix(responses_path, format);
  if (y.cols() != 1) {
    throw DataError(responses_path.string() + ": response file must have exactly one column, found " +
                    std::to_string(y.cols()));
  }
  data.responses = y.col(0);
  data.validate();
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path, Format format) {
  data.validate();
  if (format == Format::csv) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (std::size_t i = 0; i < data.n(); ++i) {
      for (std::size_t j = 0; j < data.p(); ++j) {
        write_number(out, data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        out.put(',');
      }
      write_number(out, data.responses[static_cast<Eigen::Index>(i)]);
      out.put('\n');
    }
    if (!out) throw DataError("write failed for " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_matrix_block(out, data.features);
  binio::write_u64(out, data.n());
  binio::write_f64_block(out, data.responses.data(), data.n());
  if (!out) throw DataError("write failed for " + path.string());
}

Matrix load_matrix(const std::filesystem::path& path, Format format) {
  Matrix m;
  if (format == Format::csv) {
    const auto rows = read_csv_table(path);
    m = table_to_matrix(rows, rows.front().size());
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    m = read_matrix_block(in, path.string());
  }
  check_finite(m, path.string());
  return m;
}

void save_matrix(const Matrix& m, const std::filesystem::path& path, Format format) {
  if (format == Format::csv) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (j > 0) out.put(',');
        write_number(out, m(i, j));
      }
      out.put('\n');
    }
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  write_matrix_block(out, m);
  if (!out) throw DataError("write failed for " + path.string());
}

WhitenStats fit_whitening(const Matrix& values) {
  if (values.rows() == 0 || values.cols() == 0) throw std::invalid_argument("fit_whitening: empty matrix");
  const auto n = static_cast<double>(values.rows());
  WhitenStats stats;
  stats.means = values.colwise().mean().transpose();
  stats.sds.resize(values.cols());
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    double ss = 0.0;
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      const double d = values(i, j) - stats.means[j];
      ss += d * d;
    }
    const double sd = std::sqrt(ss / n);
    stats.sds[j] = sd < kDegenerateSd ? 1.0 : sd;
  }
  return stats;
}

WhitenStats fit_whitening(const Vector& values) {
  Matrix column(values.size(), 1);
  column.col(0) = values;
  return fit_whitening(column);
}

std::vector<double> apply_whitening(const WhitenStats& stats, std::span<const double> row) {
  if (row.size() != stats.size()) {
    throw std::invalid_argument("apply_whitening: row has length " + std::to_string(row.size()) + ", stats have " +
                                std::to_string(stats.size()));
  }
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    out[j] = (row[j] - stats.means[jj]) / stats.sds[jj];
  }
  return out;
}

std::vector<double> invert_whitening(const WhitenStats& stats, std::span<const double> row) {
  if (row.size() != stats.size()) {
    throw std::invalid_argument("invert_whitening: row has length " + std::to_string(row.size()) +
                                ", stats have " + std::to_string(stats.size()));
  }
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    out[j] = row[j] * stats.sds[jj] + stats.means[jj];
  }
  return out;
}

void whiten_in_place(Matrix& values, const WhitenStats& stats) {
  if (static_cast<std::size_t>(values.cols()) != stats.size()) {
    throw std::invalid_argument("whiten_in_place: matrix has " + std::to_string(values.cols()) +
                                " columns, stats have " + std::to_string(stats.size()));
  }
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    for (Eigen::Index j = 0; j < values.cols(); ++j) values(i, j) = (values(i, j) - stats.means[j]) / stats.sds[j];
  }
}

}  // namespace msb
