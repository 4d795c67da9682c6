#include "localcp/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "localcp/error.hpp"

namespace localcp {

double nonconformity(double y, double mu, double sigma) {
  if (!(sigma > 0.0)) throw InputError(fmt::format("nonconformity scale must be > 0, got {}", sigma));
  return std::abs(y - mu) / sigma;
}

CalibrationScores calibration_scores(const RegressionModel& model, const Matrix& x,
                                     const Vector& y, std::span<const std::size_t> cal_idx) {
  CalibrationScores out;
  out.scores.reserve(cal_idx.size());
  out.source.assign(cal_idx.begin(), cal_idx.end());
  for (const auto r : cal_idx) {
    if (r >= static_cast<std::size_t>(x.rows())) throw InputError("calibration index out of range");
    const Vector row = x.row(static_cast<Eigen::Index>(r)).transpose();
    const auto ref = model.reference(row);
    out.scores.push_back(nonconformity(y(static_cast<Eigen::Index>(r)), ref.mu, ref.sigma));
  }
  return out;
}

CalibrationScores calibration_scores(const RegressionModel& model, const Dataset& ds,
                                     std::span<const std::size_t> cal_idx) {
  return calibration_scores(model, ds.features, ds.targets, cal_idx);
}

SortedScores::SortedScores(std::span<const double> scores)
    : values_(scores.begin(), scores.end()), order_(scores.size()) {
  for (double s : values_) {
    if (!std::isfinite(s) || s < 0.0) throw InputError("scores must be finite and non-negative");
  }
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
    return values_[a] < values_[b] || (values_[a] == values_[b] && a < b);
  });
}

double SortedScores::quantile(std::span<const double> weights, double alpha,
                              bool finite_sample_correction) const {
  if (values_.empty()) throw StateError("weighted quantile of an empty score set");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError(fmt::format("alpha must lie in (0, 1), got {}", alpha));
  if (weights.size() != values_.size()) {
    throw InputError(fmt::format("{} weights for {} scores", weights.size(), values_.size()));
  }
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw InputError("weights must be finite and non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw InputError("weights must have positive sum");

  double level = 1.0 - alpha;
  if (finite_sample_correction) {
    const auto n = static_cast<double>(values_.size());
    level = std::min(1.0, std::ceil((n + 1.0) * (1.0 - alpha)) / n);
  }

  double mass = 0.0;
  std::size_t i = 0;
  while (i < order_.size()) {
    const double q = values_[order_[i]];
    for (; i < order_.size() && values_[order_[i]] == q; ++i) mass += weights[order_[i]];
    if (mass / total >= level) return q;
  }
  // Only reachable through rounding when level is 1.
  return values_[order_.back()];
}

double weighted_quantile(std::span<const double> scores, std::span<const double> weights,
                         double alpha, bool finite_sample_correction) {
  if (scores.empty()) throw StateError("weighted quantile of an empty score set");
  return SortedScores(scores).quantile(weights, alpha, finite_sample_correction);
}

double empirical_quantile(std::span<const double> scores, double alpha,
                          bool finite_sample_correction) {
  const std::vector<double> ones(scores.size(), 1.0);
  return weighted_quantile(scores, ones, alpha, finite_sample_correction);
}

std::vector<double> cluster_weights(std::span<const int> assignments,
                                    const std::vector<bool>& active, double eps_min) {
  if (!(eps_min > 0.0 && eps_min <= 1.0)) {
    throw InputError(fmt::format("minimum weight must lie in (0, 1], got {}", eps_min));
  }
  std::vector<double> w(assignments.size());
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    const auto c = assignments[i];
    if (c < 0 || static_cast<std::size_t>(c) >= active.size()) {
      throw InputError("cluster assignment out of range");
    }
    w[i] = active[static_cast<std::size_t>(c)] ? 1.0 : eps_min;
  }
  return w;
}

Interval conformal_interval(double mu, double sigma, double q) {
  if (!(sigma > 0.0)) throw InputError("interval scale must be > 0");
  if (!(q >= 0.0)) throw InputError("conformal quantile must be >= 0");
  return {mu, sigma * q};
}

Evaluation evaluate(std::span<const Interval> intervals, const Vector& y) {
  if (intervals.empty()) throw InputError("evaluation needs a non-empty test set");
  if (static_cast<std::size_t>(y.size()) != intervals.size()) {
    throw InputError("interval count does not match test targets");
  }
  std::size_t covered = 0;
  double width = 0.0;
  for (std::size_t i = 0; i < intervals.size(); ++i) {
    if (intervals[i].contains(y(static_cast<Eigen::Index>(i)))) ++covered;
    width += intervals[i].width();
  }
  const auto n = static_cast<double>(intervals.size());
  return {static_cast<double>(covered) / n, width / n};
}

std::vector<Interval> normalized_cp(const RegressionModel& model, const Dataset& ds,
                                    const DataSplit& split, double alpha,
                                    bool finite_sample_correction) {
  const auto cal = calibration_scores(model, ds, split.cal);
  const double q = empirical_quantile(cal.scores, alpha, finite_sample_correction);
  std::vector<Interval> out;
  out.reserve(split.test.size());
  for (const auto r : split.test) {
    const auto ref = model.reference(ds.features.row(static_cast<Eigen::Index>(r)).transpose());
    out.push_back(conformal_interval(ref.mu, ref.sigma, q));
  }
  return out;
}

MondrianModel fit_mondrian(std::span<const double> scores, std::span<const int> strata,
                           std::size_t k, double alpha, std::size_t min_stratum_size) {
  if (k < 1) throw ConfigError("Mondrian needs K >= 1");
  if (scores.size() != strata.size()) throw InputError("scores and strata differ in length");
  MondrianModel m;
  m.cal_strata.assign(strata.begin(), strata.end());
  m.global_quantile = empirical_quantile(scores, alpha);
  m.stratum_quantile.assign(k, m.global_quantile);
  m.stratum_size.assign(k, 0);
  m.uses_fallback.assign(k, true);
  std::vector<std::vector<double>> members(k);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto s = strata[i];
    if (s < 0 || static_cast<std::size_t>(s) >= k) throw InputError("stratum id out of range");
    members[static_cast<std::size_t>(s)].push_back(scores[i]);
  }
  for (std::size_t s = 0; s < k; ++s) {
    m.stratum_size[s] = members[s].size();
    if (members[s].size() >= min_stratum_size && !members[s].empty()) {
      m.stratum_quantile[s] = empirical_quantile(members[s], alpha);
      m.uses_fallback[s] = false;
    }
  }
  return m;
}

}  // namespace localcp
