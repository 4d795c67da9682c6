#include "localcp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "localcp/error.hpp"
#include "localcp/rng.hpp"

namespace localcp {

void Dataset::validate() const {
  if (features.rows() < 1 || features.cols() < 1) {
    throw InputError("dataset needs at least one row and one feature column");
  }
  if (targets.size() != features.rows()) {
    throw InputError(fmt::format("target length {} does not match {} feature rows",
                                 targets.size(), features.rows()));
  }
  if (feature_names.size() != cols()) {
    throw InputError("feature name count does not match column count");
  }
  if (!features.allFinite() || !targets.allFinite()) {
    throw InputError("dataset contains non-finite values");
  }
}

void SyntheticConfig::validate() const {
  if (n < 1) throw ConfigError("synthetic n must be >= 1");
  if (!(base > 0.0)) throw ConfigError("synthetic base must be > 0");
  if (!(slope >= 0.0)) throw ConfigError("synthetic slope must be >= 0");
  if (!(x_lo < x_hi)) throw ConfigError("synthetic x range needs lo < hi");
  // slope >= 0, so the noise scale is smallest at x_lo.
  if (!(base + slope * x_lo > 0.0)) {
    throw ConfigError("synthetic noise scale must be positive over the x range");
  }
}

double synthetic_mean(double x) { return 2.0 + 0.45 * x + 0.6 * std::sin(0.6 * x); }

double synthetic_noise_scale(const SyntheticConfig& cfg, double x) {
  return cfg.base + cfg.slope * x;
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Dataset ds;
  const auto n = static_cast<Eigen::Index>(cfg.n);
  ds.features.resize(n, 1);
  ds.targets.resize(n);
  ds.feature_names = {"x"};
  CounterRng rng(cfg.seed);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = rng.uniform(cfg.x_lo, cfg.x_hi);
    const double eps = rng.normal() * synthetic_noise_scale(cfg, x);
    ds.features(i, 0) = x;
    ds.targets(i) = synthetic_mean(x) + eps;
  }
  return ds;
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const std::string& target_column) {
  std::ifstream in(path);
  if (!in) throw IngestionError(fmt::format("cannot open '{}'", path.string()));

  std::string line;
  if (!std::getline(in, line)) {
    throw IngestionError(fmt::format("'{}' is empty (header row required)", path.string()));
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  std::vector<std::string> header;
  for (auto f : split_fields(line)) header.emplace_back(f);

  const auto target_it = std::find(header.begin(), header.end(), target_column);
  if (target_it == header.end()) {
    throw IngestionError(
        fmt::format("target column '{}' not found in '{}'", target_column, path.string()));
  }
  const auto target_pos = static_cast<std::size_t>(target_it - header.begin());
  if (header.size() < 2) throw IngestionError("CSV needs at least one feature column");

  std::vector<double> cells;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw IngestionError(fmt::format("line {}: expected {} fields, found {}", line_no,
                                       header.size(), fields.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto f = fields[c];
      double value = 0.0;
      const auto* first = f.data();
      if (!f.empty() && *first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, f.data() + f.size(), value);
      if (f.empty() || ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(value)) {
        throw IngestionError(fmt::format("line {}, column '{}': cannot parse '{}' as a finite real",
                                         line_no, header[c], f));
      }
      cells.push_back(value);
    }
    ++rows;
  }
  if (rows == 0) throw IngestionError(fmt::format("'{}' has no data rows", path.string()));

  const std::size_t width = header.size();
  Dataset ds;
  ds.features.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(width - 1));
  ds.targets.resize(static_cast<Eigen::Index>(rows));
  for (std::size_t c = 0; c < width; ++c) {
    if (c != target_pos) ds.feature_names.push_back(header[c]);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    Eigen::Index out_col = 0;
    for (std::size_t c = 0; c < width; ++c) {
      const double v = cells[r * width + c];
      if (c == target_pos) {
        ds.targets(static_cast<Eigen::Index>(r)) = v;
      } else {
        ds.features(static_cast<Eigen::Index>(r), out_col++) = v;
      }
    }
  }
  return ds;
}

void write_csv(const std::filesystem::path& path, const Dataset& ds,
               const std::string& target_name) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError(fmt::format("cannot write '{}'", path.string()));
  for (const auto& name : ds.feature_names) out << name << ',';
  out << target_name << '\n';
  for (Eigen::Index r = 0; r < ds.features.rows(); ++r) {
    for (Eigen::Index c = 0; c < ds.features.cols(); ++c) {
      out << fmt::format("{:.17g},", ds.features(r, c));
    }
    out << fmt::format("{:.17g}\n", ds.targets(r));
  }
}

DataSplit split(const Dataset& ds, const SplitFractions& fr, std::uint64_t seed) {
  if (!(fr.train > 0.0 && fr.cal > 0.0 && fr.test > 0.0)) {
    throw SplitError("split fractions must be positive");
  }
  if (std::abs(fr.train + fr.cal + fr.test - 1.0) > 1e-9) {
    throw SplitError("split fractions must sum to 1");
  }
  const std::size_t n = ds.rows();
  const auto n_train = static_cast<std::size_t>(std::llround(fr.train * static_cast<double>(n)));
  const auto n_cal = static_cast<std::size_t>(std::llround(fr.cal * static_cast<double>(n)));
  if (n_train == 0 || n_cal == 0 || n_train + n_cal >= n) {
    throw SplitError(fmt::format(
        "split of {} rows into ({}, {}, {}) leaves an empty partition", n, fr.train, fr.cal,
        fr.test));
  }

  IndexList order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(seed);
  // Fisher-Yates with the portable index draw.
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(order[i - 1], order[j]);
  }

  DataSplit out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.cal.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_cal));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_cal), order.end());
  return out;
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

Vector select_rows(const Vector& v, std::span<const std::size_t> idx) {
  Vector out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = v(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

Standardizer Standardizer::identity(std::size_t cols) {
  const auto d = static_cast<Eigen::Index>(cols);
  return {Vector::Zero(d), Vector::Ones(d)};
}

Matrix Standardizer::apply(const Matrix& x) const {
  if (static_cast<std::size_t>(x.cols()) != cols()) {
    throw InputError(
        fmt::format("standardizer expects {} columns, got {}", cols(), x.cols()));
  }
  return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

Matrix Standardizer::inverse(const Matrix& z) const {
  if (static_cast<std::size_t>(z.cols()) != cols()) {
    throw InputError(
        fmt::format("standardizer expects {} columns, got {}", cols(), z.cols()));
  }
  Matrix x = z.array().rowwise() * scale.transpose().array();
  return x.rowwise() + mean.transpose();
}

Standardizer fit_standardizer(const Matrix& x, std::span<const std::size_t> idx) {
  if (idx.empty()) throw InputError("standardizer needs at least one row");
  const Eigen::Index d = x.cols();
  Standardizer s{Vector::Zero(d), Vector::Ones(d)};
  const auto n = static_cast<double>(idx.size());
  for (Eigen::Index c = 0; c < d; ++c) {
    double sum = 0.0;
    for (auto r : idx) sum += x(static_cast<Eigen::Index>(r), c);
    const double mean = sum / n;
    double ss = 0.0;
    for (auto r : idx) {
      const double dev = x(static_cast<Eigen::Index>(r), c) - mean;
      ss += dev * dev;
    }
    const double sd = idx.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    s.mean(c) = mean;
    s.scale(c) = std::max(sd, Standardizer::kScaleFloor);
  }
  return s;
}

Standardizer fit_standardizer(const Dataset& ds, std::span<const std::size_t> idx) {
  return fit_standardizer(ds.features, idx);
}

Matrix apply_standardizer(const Standardizer& std, const Matrix& x) { return std.apply(x); }

}  // namespace localcp
