#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "msb/types.hpp"

namespace msb {

/// Feature matrix (n x p, one observation per row) with its responses.
struct Dataset {
  Matrix features;
  Vector responses;

  std::size_t n() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t p() const { return static_cast<std::size_t>(features.cols()); }

  // Throws DataError unless dimensions agree and every value is finite.
  void validate() const;

  // Rows selected by index, in the given order.
  Dataset subset(std::span<const std::size_t> rows) const;
  // All rows except `row`.
  Dataset without_row(std::size_t row) const;
};

/// Per-column affine standardization. For responses the stats hold a single entry.
struct WhitenStats {
  Vector means;
  Vector sds;

  std::size_t size() const { return static_cast<std::size_t>(means.size()); }
};

enum class Format { csv, bin };

// .csv -> csv, anything else -> bin.
Format format_for_path(const std::filesystem::path& path);

Dataset load_dataset(const std::filesystem::path& path, Format format);
// Features from `features_path` (all columns), responses from a one-column file.
Dataset load_dataset(const std::filesystem::path& features_path,
                     const std::filesystem::path& responses_path, Format format);
void save_dataset(const Dataset& data, const std::filesystem::path& path, Format format);

// Binary matrix block without a response block ("MSBD" header, p columns).
Matrix load_matrix(const std::filesystem::path& path, Format format);
void save_matrix(const Matrix& m, const std::filesystem::path& path, Format format);

// Column means and population standard deviations; sd < 1e-12 falls back to 1.
WhitenStats fit_whitening(const Matrix& values);
WhitenStats fit_whitening(const Vector& values);

std::vector<double> apply_whitening(const WhitenStats& stats, std::span<const double> row);
std::vector<double> invert_whitening(const WhitenStats& stats, std::span<const double> row);
void whiten_in_place(Matrix& values, const WhitenStats& stats);

}  // namespace msb
