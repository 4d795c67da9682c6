#pragma once

#include <optional>
#include <span>
#include <vector>

namespace localcp {

/// Correlations are std::nullopt ("undefined") when either input has zero
/// variance. Length mismatch or fewer than two points throw InputError.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Pearson correlation of fractional ranks (ties share their average rank).
std::optional<double> spearman(std::span<const double> x, std::span<const double> y);

/// 1-based fractional ranks.
std::vector<double> fractional_ranks(std::span<const double> v);

struct InstanceRecord {
  double sigma_star = 0.0;
  double w0 = 0.0;
  double w_red = 0.0;
  double r_red = 0.0;
};

struct RiaResult {
  std::optional<double> ria_w;
  std::optional<double> ria_r;
};

/// RIA_W = pearson(sigma*, W_red), RIA_R = pearson(sigma*, R_red).
RiaResult ria(std::span<const InstanceRecord> records);

/// |m2 - m1|; undefined if either input is.
std::optional<double> gs(std::optional<double> m1, std::optional<double> m2);

/// Population variance across clusters of the within-cluster population
/// variances of raw residuals. Clusters with fewer than two points count as 0.
double heterogeneity(std::span<const double> residuals, std::span<const int> assignments,
                     std::size_t k);

}  // namespace localcp
