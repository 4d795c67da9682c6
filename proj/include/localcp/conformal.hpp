#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "localcp/data.hpp"
#include "localcp/models.hpp"

namespace localcp {

/// |y - mu| / sigma. Throws InputError unless sigma > 0.
double nonconformity(double y, double mu, double sigma);

/// Normalised nonconformity scores, one per calibration row, in cal_idx order.
struct CalibrationScores {
  std::vector<double> scores;
  IndexList source;  // row indices into the dataset the scores came from

  std::size_t size() const { return scores.size(); }
};

/// `x` must already be in the model's input space.
CalibrationScores calibration_scores(const RegressionModel& model, const Matrix& x,
                                     const Vector& y, std::span<const std::size_t> cal_idx);
CalibrationScores calibration_scores(const RegressionModel& model, const Dataset& ds,
                                     std::span<const std::size_t> cal_idx);

/// Scores sorted once so repeated weighted quantiles over different weight
/// vectors cost O(n) each after the initial O(n log n) sort.
class SortedScores {
 public:
  explicit SortedScores(std::span<const double> scores);

  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }

  /// inf{ q in scores : sum_i w_i 1[r_i <= q] / sum_i w_i >= level }, where the
  /// level is 1 - alpha, or min(1, ceil((n + 1)(1 - alpha)) / n) with the
  /// finite-sample correction. Tied scores contribute their combined mass.
  double quantile(std::span<const double> weights, double alpha,
                  bool finite_sample_correction = false) const;

 private:
  std::vector<double> values_;       // original order
  std::vector<std::size_t> order_;   // ascending by score, then index
};

/// Weighted (1 - alpha) conformal quantile; always one of the score values.
/// Throws StateError on empty scores, InputError on bad alpha or weights.
double weighted_quantile(std::span<const double> scores, std::span<const double> weights,
                         double alpha, bool finite_sample_correction = false);

/// Uniform-weight special case (plain empirical inf-quantile).
double empirical_quantile(std::span<const double> scores, double alpha,
                          bool finite_sample_correction = false);

/// Builds the calibration weight vector: 1 inside active clusters, eps_min
/// elsewhere. `active[k]` flags cluster k.
std::vector<double> cluster_weights(std::span<const int> assignments,
                                    const std::vector<bool>& active, double eps_min);

/// Symmetric interval stored as centre and half-width, so width() is exactly
/// 2 * sigma * q for conformal intervals.
struct Interval {
  double center = 0.0;
  double half_width = 0.0;

  double lo() const { return center - half_width; }
  double hi() const { return center + half_width; }
  double width() const { return 2.0 * half_width; }
  bool contains(double y) const { return lo() <= y && y <= hi(); }  // closed
  bool operator==(const Interval&) const = default;
};

/// [mu - sigma q, mu + sigma q].
Interval conformal_interval(double mu, double sigma, double q);

struct Evaluation {
  double coverage = 0.0;
  double mean_width = 0.0;
};

Evaluation evaluate(std::span<const Interval> intervals, const Vector& y);

/// Normalised split-conformal intervals for the test rows, using the model's
/// own instability as the scale. `ds` must be in the model's input space.
std::vector<Interval> normalized_cp(const RegressionModel& model, const Dataset& ds,
                                    const DataSplit& split, double alpha,
                                    bool finite_sample_correction = false);

/// Per-stratum quantiles with fallback to the global quantile for strata below
/// `min_stratum_size` points.
struct MondrianModel {
  std::vector<int> cal_strata;
  std::vector<double> stratum_quantile;
  std::vector<std::size_t> stratum_size;
  std::vector<bool> uses_fallback;
  double global_quantile = 0.0;
};

inline constexpr std::size_t kMondrianMinStratum = 20;

MondrianModel fit_mondrian(std::span<const double> scores, std::span<const int> strata,
                           std::size_t k, double alpha,
                           std::size_t min_stratum_size = kMondrianMinStratum);

struct EmbeddingWeights {
  double x = 1.0;
  double mu = 1.0;
  double sigma = 1.0;
};

struct MondrianResult {
  std::vector<Interval> intervals;
  std::vector<int> test_strata;
  MondrianModel model;
};

/// Strata are model-aware k-means clusters over the calibration rows; each
/// test row uses the quantile of its nearest stratum.
MondrianResult mondrian_cp(const RegressionModel& model, const Dataset& ds,
                           const DataSplit& split, double alpha, std::size_t k,
                           std::uint64_t seed, const EmbeddingWeights& lambda = {},
                           std::size_t min_stratum_size = kMondrianMinStratum);

}  // namespace localcp
