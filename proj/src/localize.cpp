#include "localcp/localize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "localcp/error.hpp"

namespace localcp {

EmbeddingSpec EmbeddingSpec::identity(std::size_t input_dim, EmbeddingWeights lambda) {
  return {lambda, Standardizer::identity(input_dim), Standardizer::identity(1),
          Standardizer::identity(1)};
}

namespace {

void check_lambda(const EmbeddingWeights& l) {
  for (double v : {l.x, l.mu, l.sigma}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("embedding weights must be finite and >= 0");
  }
  if (!(l.x > 0.0 || l.mu > 0.0 || l.sigma > 0.0)) {
    throw ConfigError("at least one embedding weight must be > 0");
  }
}

Standardizer fit_column(const Vector& v) {
  IndexList all(static_cast<std::size_t>(v.size()));
  std::iota(all.begin(), all.end(), std::size_t{0});
  return fit_standardizer(Matrix(v), all);
}

}  // namespace

EmbeddingSpec fit_embedding(const Matrix& x_cal, const Vector& mu_cal, const Vector& sigma_cal,
                            EmbeddingWeights lambda) {
  check_lambda(lambda);
  if (mu_cal.size() != x_cal.rows() || sigma_cal.size() != x_cal.rows()) {
    throw InputError("embedding channels differ in length");
  }
  IndexList all(static_cast<std::size_t>(x_cal.rows()));
  std::iota(all.begin(), all.end(), std::size_t{0});
  return {lambda, fit_standardizer(x_cal, all), fit_column(mu_cal), fit_column(sigma_cal)};
}

Matrix embed(const Matrix& x, const Vector& mu, const Vector& sigma, const EmbeddingSpec& spec) {
  check_lambda(spec.lambda);
  if (static_cast<std::size_t>(x.cols()) != spec.input_dim()) {
    throw InputError(fmt::format("embedding expects {} feature columns, got {}", spec.input_dim(),
                                 x.cols()));
  }
  if (mu.size() != x.rows() || sigma.size() != x.rows()) {
    throw InputError("embedding channels differ in length");
  }
  const Eigen::Index d = x.cols();
  Matrix z(x.rows(), d + 2);
  z.leftCols(d) = spec.lambda.x * spec.x_channel.apply(x);
  z.col(d) = spec.lambda.mu * spec.mu_channel.apply(Matrix(mu)).col(0);
  z.col(d + 1) = spec.lambda.sigma * spec.sigma_channel.apply(Matrix(sigma)).col(0);
  return z;
}

Vector embed_one(const Vector& x, double mu, double sigma, const EmbeddingSpec& spec) {
  const Matrix row = x.transpose();
  return embed(row, Vector::Constant(1, mu), Vector::Constant(1, sigma), spec).row(0).transpose();
}

void LocalizationSettings::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(eps_min > 0.0 && eps_min <= 1.0)) throw ConfigError("minimum weight must lie in (0, 1]");
}

CalibrationSupport::CalibrationSupport(std::span<const double> scores, std::vector<int> assignments,
                                       std::size_t k)
    : sorted_(scores), assignments_(std::move(assignments)), k_(k) {
  if (k_ < 1) throw InputError("calibration support needs K >= 1");
  if (assignments_.size() != sorted_.size()) {
    throw InputError("scores and cluster assignments differ in length");
  }
  if (assignments_.empty()) throw StateError("calibration support is empty");
  for (auto a : assignments_) {
    if (a < 0 || static_cast<std::size_t>(a) >= k_) throw InputError("cluster assignment out of range");
  }
}

Interval CalibrationSupport::interval(const std::vector<bool>& active,
                                      const LocalizationSettings& settings,
                                      PredictiveReference ref) const {
  if (active.size() != k_) throw InputError("active set size does not match K");
  if (std::none_of(active.begin(), active.end(), [](bool b) { return b; })) {
    throw InputError("active cluster set must be non-empty");
  }
  const auto w = cluster_weights(assignments_, active, settings.eps_min);
  const double q = sorted_.quantile(w, settings.alpha, settings.finite_sample_correction);
  return conformal_interval(ref.mu, ref.sigma, q);
}

Interval localized_interval(std::span<const double> scores, std::span<const int> assignments,
                            const std::vector<bool>& active, double eps_min, double alpha,
                            PredictiveReference ref) {
  const CalibrationSupport support(scores, std::vector<int>(assignments.begin(), assignments.end()),
                                   active.size());
  return support.interval(active, {eps_min, alpha, false}, ref);
}

Decomposition decompose_width(double w0, double w_min) {
  Decomposition d;
  d.w_red = w0 - w_min;
  if (w0 > 0.0) {
    d.r_red = d.w_red / w0;
  } else {
    d.degenerate = true;
  }
  return d;
}

namespace {

std::vector<int> active_ids(const std::vector<bool>& active) {
  std::vector<int> ids;
  for (std::size_t k = 0; k < active.size(); ++k) {
    if (active[k]) ids.push_back(static_cast<int>(k));
  }
  return ids;
}

}  // namespace

Trajectory greedy_trajectory(const CalibrationSupport& support, const RelevanceOrdering& ordering,
                             const LocalizationSettings& settings, PredictiveReference ref) {
  settings.validate();
  const std::size_t k = support.k();
  if (ordering.order.size() != k) throw InputError("relevance ordering does not cover K clusters");

  Trajectory t;
  std::vector<bool> held(k, true);
  t.w0 = support.interval(held, settings, ref).width();
  double w_cur = t.w0;
  t.steps.push_back({0, t.w0, t.w0, true, active_ids(held), active_ids(held)});

  std::vector<bool> candidate(k, true);
  for (std::size_t s = 1; s < k; ++s) {
    candidate[static_cast<std::size_t>(ordering.order[s - 1])] = false;
    const double w_s = support.interval(candidate, settings, ref).width();
    t.delta_w.push_back(w_s - w_cur);
    const bool accept = w_s <= w_cur;
    if (accept) {
      w_cur = w_s;
      held = candidate;
    }
    t.steps.push_back({s, w_cur, w_s, accept, active_ids(candidate), active_ids(held)});
  }

  t.w_min = t.w0;
  for (const auto& st : t.steps) t.w_min = std::min(t.w_min, st.width_current);
  const auto d = decompose_width(t.w0, t.w_min);
  t.w_red = d.w_red;
  t.r_red = d.r_red;
  t.degenerate = d.degenerate;
  return t;
}

std::vector<double> cluster_effects(const CalibrationSupport& support,
                                    const LocalizationSettings& settings,
                                    PredictiveReference ref) {
  settings.validate();
  const std::size_t k = support.k();
  if (k < 2) throw InputError("cluster effects need K >= 2");
  std::vector<bool> active(k, true);
  const double w0 = support.interval(active, settings, ref).width();
  std::vector<double> effects(k);
  for (std::size_t c = 0; c < k; ++c) {
    active[c] = false;
    effects[c] = support.interval(active, settings, ref).width() - w0;
    active[c] = true;
  }
  return effects;
}

}  // namespace localcp
