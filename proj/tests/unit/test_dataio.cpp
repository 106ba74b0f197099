#include <doctest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include "msb/dataio.hpp"
#include "msb/error.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace msb;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "msb_test_dataio";
  fs::create_directories(dir);
  return dir / name;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) s.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}
void put_u64(std::string& s, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) s.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
}
void put_f64(std::string& s, double v) { put_u64(s, std::bit_cast<std::uint64_t>(v)); }

}  // namespace

TEST_CASE("csv with response in the last column") {
  const auto path = scratch("small.csv");
  write_file(path, "1,2,0.5\n3,4,1.5\n5,6,2.5");
  const Dataset d = load_dataset(path, Format::csv);
  CHECK(d.n() == 3);
  CHECK(d.p() == 2);
  CHECK(d.features(2, 1) == 6.0);
  CHECK(d.responses[1] == 1.5);
}

TEST_CASE("hand-built binary file with a response block") {
  std::string bytes = "MSBD";
  put_u32(bytes, 1);
  put_u64(bytes, 2);
  put_u64(bytes, 3);
  for (int k = 0; k < 6; ++k) put_f64(bytes, k + 0.25);
  put_u64(bytes, 2);
  put_f64(bytes, -1.0);
  put_f64(bytes, 7.0);
  const auto path = scratch("hand.bin");
  write_file(path, bytes);
  const Dataset d = load_dataset(path, Format::bin);
  CHECK(d.n() == 2);
  CHECK(d.p() == 3);
  CHECK(d.features(1, 0) == 3.25);
  CHECK(d.responses[1] == 7.0);
}

TEST_CASE("NaN cell is reported with its position") {
  const auto path = scratch("nan.csv");
  write_file(path, "1,2,3\n4,NaN,6\n");
  try {
    (void)load_dataset(path, Format::csv);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("column 2") != std::string::npos);
  }
}

TEST_CASE("malformed inputs are rejected") {
  const auto ragged = scratch("ragged.csv");
  write_file(ragged, "1,2,3\n4,5\n");
  CHECK_THROWS_AS((void)load_dataset(ragged, Format::csv), DataError);

  const auto text = scratch("word.csv");
  write_file(text, "1,abc,3\n");
  CHECK_THROWS_AS((void)load_dataset(text, Format::csv), DataError);

  const auto magic = scratch("magic.bin");
  write_file(magic, "XXXX0000");
  CHECK_THROWS_AS((void)load_dataset(magic, Format::bin), DataError);

  std::string truncated = "MSBD";
  put_u32(truncated, 1);
  put_u64(truncated, 4);
  put_u64(truncated, 4);
  put_f64(truncated, 1.0);
  const auto shortfile = scratch("short.bin");
  write_file(shortfile, truncated);
  CHECK_THROWS_AS((void)load_dataset(shortfile, Format::bin), DataError);

  std::string version = "MSBD";
  put_u32(version, 9);
  const auto badversion = scratch("version.bin");
  write_file(badversion, version);
  CHECK_THROWS_AS((void)load_dataset(badversion, Format::bin), DataError);
}

TEST_CASE("separate response file") {
  const auto fx = scratch("fx.csv");
  const auto fy = scratch("fy.csv");
  write_file(fx, "1,2\n3,4\n");
  write_file(fy, "10\n20\n");
  const Dataset d = load_dataset(fx, fy, Format::csv);
  CHECK(d.p() == 2);
  CHECK(d.responses[1] == 20.0);
  write_file(fy, "10\n20\n30\n");
  CHECK_THROWS_AS((void)load_dataset(fx, fy, Format::csv), DataError);
}

TEST_CASE("whitening examples") {
  Matrix a(2, 1);
  a << 1, 3;
  auto s = fit_whitening(a);
  CHECK(s.means[0] == 2.0);
  CHECK(s.sds[0] == 1.0);

  Matrix c(3, 1);
  c << 5, 5, 5;
  s = fit_whitening(c);
  CHECK(s.means[0] == 5.0);
  CHECK(s.sds[0] == 1.0);

  Matrix d(4, 1);
  d << 0, 0, 3, 3;
  s = fit_whitening(d);
  CHECK(s.means[0] == 1.5);
  CHECK(s.sds[0] == 1.5);

  CHECK_THROWS((void)fit_whitening(Matrix(0, 3)));
}

TEST_CASE("apply and invert whitening") {
  WhitenStats s;
  s.means = Vector::Zero(1);
  s.sds = Vector::Constant(1, 2.0);
  const std::vector<double> row{4.0};
  CHECK(apply_whitening(s, row)[0] == 2.0);

  const Matrix x = oracle::gaussian_matrix(30, 5, 11) * 3.0 + Matrix::Constant(30, 5, 7.0);
  const WhitenStats stats = fit_whitening(x);
  const std::vector<double> means(stats.means.data(), stats.means.data() + 5);
  for (double v : apply_whitening(stats, means)) CHECK(v == 0.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const auto back = invert_whitening(stats, apply_whitening(stats, row_span(x, static_cast<std::size_t>(i))));
    for (std::size_t j = 0; j < 5; ++j) CHECK(std::abs(back[j] - x(i, static_cast<Eigen::Index>(j))) < 1e-12);
  }
  CHECK_THROWS_AS((void)apply_whitening(stats, row), std::invalid_argument);
}

TEST_CASE("whitened columns have mean 0 and sd 1, degenerate columns become zeros") {
  Matrix x = oracle::gaussian_matrix(200, 6, 5) * 4.0;
  x.col(3).setConstant(2.5);
  const WhitenStats stats = fit_whitening(x);
  whiten_in_place(x, stats);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    std::vector<double> col(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) col[static_cast<std::size_t>(i)] = x(i, j);
    if (j == 3) {
      for (double v : col) CHECK(v == 0.0);
      continue;
    }
    CHECK(std::abs(oracle::mean(col)) < 1e-10);
    CHECK(std::abs(std::sqrt(oracle::variance(col)) - 1.0) < 1e-10);
  }
}

TEST_CASE("binary load-save-load is bit exact") {
  Dataset d;
  d.features = oracle::gaussian_matrix(17, 9, 3);
  d.features(0, 0) = -0.0;
  d.features(1, 1) = 1e-310;
  d.responses = oracle::gaussian_matrix(17, 1, 4).col(0);
  const auto first = scratch("rt1.bin");
  const auto second = scratch("rt2.bin");
  save_dataset(d, first, Format::bin);
  const Dataset loaded = load_dataset(first, Format::bin);
  save_dataset(loaded, second, Format::bin);
  CHECK(read_bytes(first) == read_bytes(second));
  for (Eigen::Index i = 0; i < d.features.rows(); ++i)
    for (Eigen::Index j = 0; j < d.features.cols(); ++j)
      CHECK(std::bit_cast<std::uint64_t>(loaded.features(i, j)) == std::bit_cast<std::uint64_t>(d.features(i, j)));
}

TEST_CASE("csv round trip preserves values exactly") {
  Dataset d;
  d.features = oracle::gaussian_matrix(10, 4, 8);
  d.responses = oracle::gaussian_matrix(10, 1, 9).col(0);
  const auto path = scratch("rt.csv");
  save_dataset(d, path, Format::csv);
  const Dataset loaded = load_dataset(path, Format::csv);
  CHECK(loaded.features == d.features);
  CHECK(loaded.responses == d.responses);
}

TEST_CASE("subset and without_row") {
  Dataset d;
  d.features = oracle::gaussian_matrix(5, 2, 1);
  d.responses = Vector::LinSpaced(5, 0, 4);
  const Dataset rest = d.without_row(2);
  CHECK(rest.n() == 4);
  CHECK(rest.responses[2] == 3.0);
  CHECK(rest.features.row(2) == d.features.row(3));
}
