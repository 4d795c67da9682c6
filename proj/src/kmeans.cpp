#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "localcp/error.hpp"
#include "localcp/localize.hpp"
#include "localcp/rng.hpp"

namespace localcp {

namespace {

double sq_dist(const Matrix& z, Eigen::Index row, const Matrix& c, Eigen::Index k) {
  return (z.row(row) - c.row(k)).squaredNorm();
}

int nearest_row(const Matrix& z, Eigen::Index row, const Matrix& c) {
  int best = 0;
  double best_d = sq_dist(z, row, c, 0);
  for (Eigen::Index k = 1; k < c.rows(); ++k) {
    const double d = sq_dist(z, row, c, k);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

std::size_t count_distinct_rows(const Matrix& z) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(z.rows()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      if (z(a, c) != z(b, c)) return z(a, c) < z(b, c);
    }
    return false;
  };
  std::sort(idx.begin(), idx.end(), less);
  std::size_t distinct = idx.empty() ? 0 : 1;
  for (std::size_t i = 1; i < idx.size(); ++i) {
    if (less(idx[i - 1], idx[i])) ++distinct;
  }
  return distinct;
}

Matrix plus_plus_seeds(const Matrix& z, std::size_t k, CounterRng& rng) {
  const Eigen::Index n = z.rows();
  Matrix c(static_cast<Eigen::Index>(k), z.cols());
  c.row(0) = z.row(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(n))));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) d2[static_cast<std::size_t>(i)] = sq_dist(z, i, c, 0);
  for (std::size_t j = 1; j < k; ++j) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    Eigen::Index pick = n - 1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double cum = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        cum += d2[static_cast<std::size_t>(i)];
        if (cum > target && d2[static_cast<std::size_t>(i)] > 0.0) {
          pick = i;
          break;
        }
      }
      // Rounding can leave target beyond the last cumulative value.
      while (d2[static_cast<std::size_t>(pick)] == 0.0) --pick;
    }
    c.row(static_cast<Eigen::Index>(j)) = z.row(pick);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& d = d2[static_cast<std::size_t>(i)];
      d = std::min(d, sq_dist(z, i, c, static_cast<Eigen::Index>(j)));
    }
  }
  return c;
}

void update_centroids(const Matrix& z, const std::vector<int>& labels, Matrix& c,
                      std::vector<std::size_t>& counts) {
  c.setZero();
  std::fill(counts.begin(), counts.end(), 0);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const auto l = labels[static_cast<std::size_t>(i)];
    c.row(l) += z.row(i);
    ++counts[static_cast<std::size_t>(l)];
  }
  for (Eigen::Index k = 0; k < c.rows(); ++k) {
    const auto cnt = counts[static_cast<std::size_t>(k)];
    if (cnt > 0) c.row(k) /= static_cast<double>(cnt);
  }
}

// Moves the point farthest from its centroid (among clusters that can spare
// one) into each empty cluster, then refreshes the affected centroids.
void repair_empty(const Matrix& z, std::vector<int>& labels, Matrix& c,
                  std::vector<std::size_t>& counts) {
  for (Eigen::Index k = 0; k < c.rows(); ++k) {
    if (counts[static_cast<std::size_t>(k)] > 0) continue;
    Eigen::Index far = -1;
    double far_d = -1.0;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const auto l = labels[static_cast<std::size_t>(i)];
      if (counts[static_cast<std::size_t>(l)] < 2) continue;
      const double d = sq_dist(z, i, c, l);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    if (far < 0) break;
    const auto old = labels[static_cast<std::size_t>(far)];
    labels[static_cast<std::size_t>(far)] = static_cast<int>(k);
    --counts[static_cast<std::size_t>(old)];
    counts[static_cast<std::size_t>(k)] = 1;
    c.row(k) = z.row(far);
    c.row(old).setZero();
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      if (labels[static_cast<std::size_t>(i)] == old) c.row(old) += z.row(i);
    }
    c.row(old) /= static_cast<double>(counts[static_cast<std::size_t>(old)]);
  }
}

ClusterModel lloyd(const Matrix& z, Matrix centroids, std::size_t max_iter) {
  const auto n = static_cast<std::size_t>(z.rows());
  const auto k = static_cast<std::size_t>(centroids.rows());
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = nearest_row(z, static_cast<Eigen::Index>(i), centroids);
  std::vector<std::size_t> counts(k);
  std::vector<int> next(n);
  for (std::size_t it = 0; it < max_iter; ++it) {
    update_centroids(z, labels, centroids, counts);
    repair_empty(z, labels, centroids, counts);
    for (std::size_t i = 0; i < n; ++i) {
      next[i] = nearest_row(z, static_cast<Eigen::Index>(i), centroids);
    }
    const bool stable = next == labels;
    labels.swap(next);
    if (stable) break;
  }
  // Iteration cap reached with an emptied cluster: repair as a last resort.
  std::fill(counts.begin(), counts.end(), 0);
  for (auto l : labels) ++counts[static_cast<std::size_t>(l)];
  if (std::find(counts.begin(), counts.end(), 0) != counts.end()) {
    repair_empty(z, labels, centroids, counts);
  }
  ClusterModel m;
  m.centroids = std::move(centroids);
  m.assignments = std::move(labels);
  m.k = k;
  m.inertia = inertia(z, m.centroids, m.assignments);
  return m;
}

}  // namespace

int ClusterModel::nearest(const Vector& z) const {
  if (z.size() != centroids.cols()) {
    throw InputError(fmt::format("embedding has dimension {}, centroids {}", z.size(), centroids.cols()));
  }
  int best = 0;
  double best_d = (centroids.row(0).transpose() - z).squaredNorm();
  for (Eigen::Index k = 1; k < centroids.rows(); ++k) {
    const double d = (centroids.row(k).transpose() - z).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(k);
    }
  }
  return best;
}

double inertia(const Matrix& z, const Matrix& centroids, std::span<const int> assignments) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    total += sq_dist(z, i, centroids, assignments[static_cast<std::size_t>(i)]);
  }
  return total;
}

ClusterModel kmeans(const Matrix& z, const KMeansOptions& options) {
  const auto n = static_cast<std::size_t>(z.rows());
  if (options.k < 1) throw ConfigError("k-means needs K >= 1");
  if (options.k > n) {
    throw ConfigError(fmt::format("k-means: K = {} exceeds {} points", options.k, n));
  }
  if (options.n_init < 1 || options.max_iter < 1) {
    throw ConfigError("k-means needs n_init >= 1 and max_iter >= 1");
  }
  if (!z.allFinite()) throw InputError("k-means input contains non-finite values");
  if (count_distinct_rows(z) < options.k) {
    throw ConfigError(fmt::format("k-means: fewer than K = {} distinct points", options.k));
  }

  ClusterModel best;
  bool have_best = false;
  for (std::size_t r = 0; r < options.n_init; ++r) {
    CounterRng rng(derive_seed(options.seed, r));
    auto candidate = lloyd(z, plus_plus_seeds(z, options.k, rng), options.max_iter);
    if (!have_best || candidate.inertia < best.inertia) {
      best = std::move(candidate);
      have_best = true;
    }
  }
  best.seed = options.seed;
  return best;
}

RelevanceOrdering order_clusters(const ClusterModel& model, const Vector& z_star) {
  if (z_star.size() != model.centroids.cols()) {
    throw InputError(fmt::format("test embedding has dimension {}, expected {}", z_star.size(),
                                 model.centroids.cols()));
  }
  RelevanceOrdering out;
  const auto k = static_cast<std::size_t>(model.centroids.rows());
  out.distances.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    out.distances[c] = (model.centroids.row(static_cast<Eigen::Index>(c)).transpose() - z_star).norm();
  }
  out.order.resize(k);
  std::iota(out.order.begin(), out.order.end(), 0);
  std::stable_sort(out.order.begin(), out.order.end(), [&](int a, int b) {
    return out.distances[static_cast<std::size_t>(a)] > out.distances[static_cast<std::size_t>(b)];
  });
  return out;
}

}  // namespace localcp
