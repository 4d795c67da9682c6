#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "localcp/error.hpp"
#include "localcp/models.hpp"
#include "localcp/parallel.hpp"
#include "localcp/rng.hpp"

namespace localcp {

double RegressionTree::predict(const Vector& x) const {
  int node = 0;
  while (feature[static_cast<std::size_t>(node)] >= 0) {
    const auto n = static_cast<std::size_t>(node);
    node = x(feature[n]) <= threshold[n] ? left[n] : right[n];
  }
  return value[static_cast<std::size_t>(node)];
}

std::size_t RegressionTree::depth() const {
  if (feature.empty()) return 0;
  std::vector<std::size_t> d(feature.size(), 0);
  std::size_t deepest = 0;
  // Children are always appended after their parent.
  for (std::size_t n = 0; n < feature.size(); ++n) {
    deepest = std::max(deepest, d[n]);
    if (feature[n] >= 0) {
      d[static_cast<std::size_t>(left[n])] = d[n] + 1;
      d[static_cast<std::size_t>(right[n])] = d[n] + 1;
    }
  }
  return deepest;
}

RegressionTree RegressionTree::constant(double v) {
  RegressionTree t;
  t.feature = {-1};
  t.threshold = {0.0};
  t.left = {-1};
  t.right = {-1};
  t.value = {v};
  return t;
}

namespace {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  std::size_t left_count = 0;
};

struct PendingNode {
  int id;
  std::size_t begin;
  std::size_t end;
  std::size_t depth;
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const Vector& y, const ForestParams& params, std::uint64_t seed)
      : x_(x), y_(y), params_(params), rng_(seed) {
    const auto d = static_cast<std::size_t>(x.cols());
    mtry_ = params.features_per_split == 0 ? std::max<std::size_t>(1, d / 3)
                                           : params.features_per_split;
    candidates_.resize(d);
  }

  RegressionTree build(std::vector<std::size_t> rows) {
    rows_ = std::move(rows);
    RegressionTree tree;
    add_node(tree);
    std::vector<PendingNode> stack{{0, 0, rows_.size(), 0}};
    while (!stack.empty()) {
      const PendingNode node = stack.back();
      stack.pop_back();
      const auto id = static_cast<std::size_t>(node.id);
      tree.value[id] = mean(node.begin, node.end);

      const bool depth_ok = !params_.max_depth || node.depth < *params_.max_depth;
      if (!depth_ok || node.end - node.begin < 2 * params_.min_leaf || is_pure(node)) continue;
      const auto choice = best_split(node);
      if (choice.feature < 0) continue;

      // Partition rows in place: left block keeps x <= threshold.
      const auto f = static_cast<Eigen::Index>(choice.feature);
      const auto mid = std::stable_partition(
          rows_.begin() + static_cast<std::ptrdiff_t>(node.begin),
          rows_.begin() + static_cast<std::ptrdiff_t>(node.end),
          [&](std::size_t r) { return x_(static_cast<Eigen::Index>(r), f) <= choice.threshold; });
      const auto split_at = static_cast<std::size_t>(mid - rows_.begin());

      const int left_id = add_node(tree);
      const int right_id = add_node(tree);
      tree.feature[id] = choice.feature;
      tree.threshold[id] = choice.threshold;
      tree.left[id] = left_id;
      tree.right[id] = right_id;
      stack.push_back({right_id, split_at, node.end, node.depth + 1});
      stack.push_back({left_id, node.begin, split_at, node.depth + 1});
    }
    return tree;
  }

 private:
  static int add_node(RegressionTree& t) {
    t.feature.push_back(-1);
    t.threshold.push_back(0.0);
    t.left.push_back(-1);
    t.right.push_back(-1);
    t.value.push_back(0.0);
    return static_cast<int>(t.feature.size() - 1);
  }

  double target(std::size_t r) const { return y_(static_cast<Eigen::Index>(r)); }

  double mean(std::size_t begin, std::size_t end) const {
    double s = 0.0;
    for (std::size_t i = begin; i < end; ++i) s += target(rows_[i]);
    return s / static_cast<double>(end - begin);
  }

  bool is_pure(const PendingNode& node) const {
    const double first = target(rows_[node.begin]);
    for (std::size_t i = node.begin + 1; i < node.end; ++i) {
      if (target(rows_[i]) != first) return false;
    }
    return true;
  }

  // Draws mtry distinct features and returns them in ascending order, so ties
  // in the split score resolve to the lowest feature index.
  std::vector<std::size_t> draw_features() {
    const std::size_t d = candidates_.size();
    std::iota(candidates_.begin(), candidates_.end(), std::size_t{0});
    const std::size_t k = std::min(mtry_, d);
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + static_cast<std::size_t>(rng_.uniform_index(d - i));
      std::swap(candidates_[i], candidates_[j]);
    }
    std::vector<std::size_t> out(candidates_.begin(),
                                 candidates_.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(out.begin(), out.end());
    return out;
  }

  // Maximises sum_L^2 / n_L + sum_R^2 / n_R, equivalent to maximal reduction
  // of the within-node sum of squares. Scans thresholds in ascending order and
  // only replaces the incumbent on strict improvement.
  SplitChoice best_split(const PendingNode& node) {
    const std::size_t n = node.end - node.begin;
    const double total = [&] {
      double s = 0.0;
      for (std::size_t i = node.begin; i < node.end; ++i) s += target(rows_[i]);
      return s;
    }();
    const double parent_score = total * total / static_cast<double>(n);
    double best_score = parent_score + 1e-12 * std::max(1.0, std::abs(parent_score));
    SplitChoice best;

    std::vector<std::pair<double, double>> column(n);
    for (const auto f : draw_features()) {
      for (std::size_t i = 0; i < n; ++i) {
        const auto r = rows_[node.begin + i];
        column[i] = {x_(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(f)), target(r)};
      }
      std::sort(column.begin(), column.end());
      double left_sum = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_sum += column[i].second;
        const std::size_t n_left = i + 1;
        if (column[i].first == column[i + 1].first) continue;
        if (n_left < params_.min_leaf || n - n_left < params_.min_leaf) continue;
        const double right_sum = total - left_sum;
        const double score = left_sum * left_sum / static_cast<double>(n_left) +
                             right_sum * right_sum / static_cast<double>(n - n_left);
        if (score > best_score) {
          best_score = score;
          best.feature = static_cast<int>(f);
          double mid = 0.5 * (column[i].first + column[i + 1].first);
          if (!(mid < column[i + 1].first)) mid = column[i].first;
          best.threshold = mid;
          best.left_count = n_left;
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  const Vector& y_;
  const ForestParams& params_;
  CounterRng rng_;
  std::size_t mtry_ = 1;
  std::vector<std::size_t> candidates_;
  std::vector<std::size_t> rows_;
};

}  // namespace

RegressionTree fit_tree(const Matrix& x, const Vector& y, std::span<const std::size_t> rows,
                        const ForestParams& params, std::uint64_t seed) {
  if (rows.empty()) throw FitError("tree needs at least one row");
  TreeBuilder builder(x, y, params, seed);
  return builder.build(std::vector<std::size_t>(rows.begin(), rows.end()));
}

ForestModel::ForestModel(std::vector<RegressionTree> trees, std::vector<std::uint64_t> tree_seeds,
                         std::size_t input_dim, ForestParams params)
    : trees_(std::move(trees)),
      tree_seeds_(std::move(tree_seeds)),
      input_dim_(input_dim),
      params_(params) {
  if (trees_.empty()) throw FitError("forest needs at least one tree");
  if (!(params_.sigma_floor > 0.0)) throw ConfigError("sigma floor must be > 0");
  params_.n_trees = trees_.size();
}

std::vector<double> ForestModel::tree_predictions(const Vector& x) const {
  check_dim(x);
  std::vector<double> out;
  out.reserve(trees_.size());
  for (const auto& t : trees_) out.push_back(t.predict(x));
  return out;
}

double ForestModel::predict(const Vector& x) const {
  const auto preds = tree_predictions(x);
  double s = 0.0;
  for (double p : preds) s += p;
  return s / static_cast<double>(preds.size());
}

double ForestModel::instability(const Vector& x) const {
  const auto preds = tree_predictions(x);
  if (preds.size() < 2) return params_.sigma_floor;
  double s = 0.0;
  for (double p : preds) s += p;
  const double m = s / static_cast<double>(preds.size());
  double ss = 0.0;
  for (double p : preds) ss += (p - m) * (p - m);
  const double sd = std::sqrt(ss / static_cast<double>(preds.size() - 1));
  return std::max(sd, params_.sigma_floor);
}

ForestModel forest_fit(const Matrix& x, const Vector& y, const ForestParams& params) {
  if (x.rows() != y.size()) throw InputError("forest: feature rows and targets differ in length");
  if (x.rows() < 2) throw FitError("forest needs at least 2 training rows");
  if (!x.allFinite() || !y.allFinite()) throw InputError("forest: non-finite input");
  const auto d = static_cast<std::size_t>(x.cols());
  if (params.n_trees < 1) throw ConfigError("forest needs n_trees >= 1");
  if (params.min_leaf < 1) throw ConfigError("forest needs min_leaf >= 1");
  if (params.features_per_split > d) {
    throw ConfigError(fmt::format("features_per_split {} exceeds {} features",
                                  params.features_per_split, d));
  }

  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::uint64_t> seeds(params.n_trees);
  for (std::size_t t = 0; t < params.n_trees; ++t) seeds[t] = derive_seed(params.seed, t);

  std::vector<RegressionTree> trees(params.n_trees);
  parallel_for(params.n_trees, params.n_threads, [&](std::size_t t) {
    CounterRng rng(seeds[t]);
    std::vector<std::size_t> rows(n);
    if (params.bootstrap) {
      for (auto& r : rows) r = static_cast<std::size_t>(rng.uniform_index(n));
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    trees[t] = fit_tree(x, y, rows, params, rng.next_u64());
  });
  return ForestModel(std::move(trees), std::move(seeds), d, params);
}

}  // namespace localcp
