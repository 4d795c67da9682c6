#include "localcp/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "localcp/error.hpp"

namespace localcp {

namespace {

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double population_variance(std::span<const double> v) {
  if (v.empty()) return 0.0;
  if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); })) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size());
}

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw InputError(fmt::format("correlation inputs differ in length ({} vs {})", x.size(), y.size()));
  }
  if (x.size() < 2) throw InputError("correlation needs at least two points");
}

}  // namespace

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> fractional_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    // Positions i..j (0-based) share ranks i+1..j+1.
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  return pearson(rx, ry);
}

RiaResult ria(std::span<const InstanceRecord> records) {
  if (records.size() < 2) throw InputError("RIA needs at least two instances");
  std::vector<double> sigma, w_red, r_red;
  sigma.reserve(records.size());
  w_red.reserve(records.size());
  r_red.reserve(records.size());
  for (const auto& r : records) {
    sigma.push_back(r.sigma_star);
    w_red.push_back(r.w_red);
    r_red.push_back(r.r_red);
  }
  return {pearson(sigma, w_red), pearson(sigma, r_red)};
}

std::optional<double> gs(std::optional<double> m1, std::optional<double> m2) {
  if (!m1 || !m2) return std::nullopt;
  return std::abs(*m2 - *m1);
}

double heterogeneity(std::span<const double> residuals, std::span<const int> assignments,
                     std::size_t k) {
  if (residuals.empty()) throw InputError("heterogeneity needs residuals");
  if (residuals.size() != assignments.size()) {
    throw InputError("residuals and assignments differ in length");
  }
  if (k < 1) throw InputError("heterogeneity needs K >= 1");
  std::vector<std::vector<double>> members(k);
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    const auto c = assignments[i];
    if (c < 0 || static_cast<std::size_t>(c) >= k) throw InputError("cluster id out of range");
    members[static_cast<std::size_t>(c)].push_back(residuals[i]);
  }
  std::vector<double> within(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    if (members[c].size() >= 2) within[c] = population_variance(members[c]);
  }
  return population_variance(within);
}

}  // namespace localcp
