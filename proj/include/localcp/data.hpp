#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace localcp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexList = std::vector<std::size_t>;

/// Feature matrix, target vector and column names. All entries finite.
struct Dataset {
  Matrix features;
  Vector targets;
  std::vector<std::string> feature_names;

  std::size_t rows() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(features.cols()); }

  /// Throws InputError if shapes disagree or any entry is non-finite.
  void validate() const;
};

/// Disjoint, exhaustive train / calibration / test index sets.
struct DataSplit {
  IndexList train;
  IndexList cal;
  IndexList test;
};

struct SplitFractions {
  double train = 0.6;
  double cal = 0.2;
  double test = 0.2;
};

/// Heteroscedastic 1-D regression process:
///   y = 2 + 0.45 x + 0.6 sin(0.6 x) + eps,  eps ~ N(0, (base + slope x)^2).
struct SyntheticConfig {
  std::size_t n = 5000;
  std::uint64_t seed = 0;
  double base = 0.35;
  double slope = 0.28;
  double x_lo = 0.0;
  double x_hi = 10.0;

  void validate() const;
};

double synthetic_mean(double x);
double synthetic_noise_scale(const SyntheticConfig& cfg, double x);

Dataset generate_synthetic(const SyntheticConfig& cfg);

/// Reads a comma-separated file with a header row. Every cell must parse as a
/// finite real; the target column is moved out of the feature matrix.
Dataset load_csv(const std::filesystem::path& path, const std::string& target_column);

/// Writes features followed by the target under `target_name`.
void write_csv(const std::filesystem::path& path, const Dataset& ds,
               const std::string& target_name);

/// Seeded uniform shuffle partitioned by rounded fractions; the test set takes
/// the remainder.
DataSplit split(const Dataset& ds, const SplitFractions& fractions, std::uint64_t seed);

Matrix select_rows(const Matrix& m, std::span<const std::size_t> idx);
Vector select_rows(const Vector& v, std::span<const std::size_t> idx);

/// Per-column affine standardisation. Scale is the sample std (ddof = 1),
/// floored at 1e-12; constant columns therefore map to 0.
struct Standardizer {
  static constexpr double kScaleFloor = 1e-12;

  Vector mean;
  Vector scale;

  static Standardizer identity(std::size_t cols);

  Matrix apply(const Matrix& x) const;
  Matrix inverse(const Matrix& z) const;
  std::size_t cols() const { return static_cast<std::size_t>(mean.size()); }
};

/// Fits on the rows in `idx` only; other rows are never read.
Standardizer fit_standardizer(const Matrix& x, std::span<const std::size_t> idx);
Standardizer fit_standardizer(const Dataset& ds, std::span<const std::size_t> idx);
Matrix apply_standardizer(const Standardizer& std, const Matrix& x);

}  // namespace localcp
