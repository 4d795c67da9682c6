#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "localcp/error.hpp"
#include "localcp/localize.hpp"
#include "localcp/rng.hpp"
#include "oracles.hpp"

using namespace localcp;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Scores {1,1,1,1} in cluster 0 and {10,10,10,10} in cluster 1.
struct TwoClusterCase {
  std::vector<double> scores{1, 1, 1, 1, 10, 10, 10, 10};
  std::vector<int> assign{0, 0, 0, 0, 1, 1, 1, 1};
  CalibrationSupport support{scores, assign, 2};
  LocalizationSettings settings{1e-3, 0.1, false};
  PredictiveReference ref{0.0, 1.0};
};

RelevanceOrdering ordering_of(std::vector<int> order) {
  RelevanceOrdering o;
  o.order = std::move(order);
  o.distances.assign(o.order.size(), 0.0);
  for (std::size_t i = 0; i < o.order.size(); ++i)
    o.distances[static_cast<std::size_t>(o.order[i])] = double(o.order.size() - i);
  return o;
}

}  // namespace

TEST_CASE("embedding with identity standardisers") {
  EmbeddingSpec spec = EmbeddingSpec::identity(2);
  Vector z = embed_one(vec({1, 2}), 3.0, 0.5, spec);
  CHECK(z == vec({1, 2, 3, 0.5}));
  CHECK(spec.dim() == 4);
  CHECK_THROWS_AS(embed_one(vec({1}), 3.0, 0.5, spec), InputError);
}

TEST_CASE("embedding with zero sigma weight ignores the sigma channel") {
  Matrix x(3, 1);
  x << 0, 1, 2;
  Vector mu = vec({1, 2, 4});
  EmbeddingSpec spec = fit_embedding(x, mu, vec({0.1, 0.2, 0.3}), {1, 1, 0});
  Matrix a = embed(x, mu, vec({0.1, 0.2, 0.3}), spec);
  Matrix b = embed(x, mu, vec({5, 0.01, 2}), spec);
  CHECK(a == b);
}

TEST_CASE("embedding x weight scales only the feature block") {
  CounterRng rng(3);
  Matrix x(20, 2);
  Vector mu(20), sigma(20);
  for (Eigen::Index i = 0; i < 20; ++i) {
    x(i, 0) = rng.normal() * 100;
    x(i, 1) = rng.normal();
    mu(i) = rng.normal() * 5;
    sigma(i) = rng.uniform(0.1, 2);
  }
  EmbeddingSpec one = fit_embedding(x, mu, sigma, {1, 1, 1});
  EmbeddingSpec two = fit_embedding(x, mu, sigma, {2, 1, 1});
  Matrix a = embed(x, mu, sigma, one), b = embed(x, mu, sigma, two);
  // Elementwise: standardise each channel by its own mean and sample std.
  for (Eigen::Index j = 0; j < 2; ++j) {
    const double m = x.col(j).mean();
    const double sd = std::sqrt((x.col(j).array() - m).square().sum() / 19.0);
    for (Eigen::Index i = 0; i < 20; ++i) {
      CHECK(a(i, j) == doctest::Approx((x(i, j) - m) / sd).epsilon(1e-12));
      CHECK(b(i, j) == doctest::Approx(2 * (x(i, j) - m) / sd).epsilon(1e-12));
    }
  }
  CHECK(a.col(2) == b.col(2));
  CHECK(a.col(3) == b.col(3));
}

TEST_CASE("embedding rejects all-zero weights") {
  Matrix x(2, 1);
  x << 0, 1;
  CHECK_THROWS_AS(fit_embedding(x, vec({0, 1}), vec({1, 1}), {0, 0, 0}), ConfigError);
}

TEST_CASE("k-means with one cluster returns the mean") {
  Matrix z(4, 2);
  z << 0, 0, 2, 0, 0, 4, 2, 4;
  ClusterModel m = kmeans(z, {1, 5, 10, 300});
  CHECK(m.centroids(0, 0) == doctest::Approx(1.0));
  CHECK(m.centroids(0, 1) == doctest::Approx(2.0));
  CHECK(m.assignments == std::vector<int>{0, 0, 0, 0});
}

TEST_CASE("k-means separates two blobs exactly") {
  CounterRng rng(4);
  Matrix z(40, 2);
  for (Eigen::Index i = 0; i < 40; ++i) {
    const double c = i < 20 ? 0.0 : 100.0;
    z(i, 0) = c + rng.uniform(-1, 1);
    z(i, 1) = c + rng.uniform(-1, 1);
  }
  ClusterModel m = kmeans(z, {2, 9, 10, 300});
  const int a = m.assignments[0];
  for (Eigen::Index i = 0; i < 40; ++i)
    CHECK(m.assignments[static_cast<std::size_t>(i)] == (i < 20 ? a : 1 - a));
  const Eigen::RowVectorXd mean_a = z.topRows(20).colwise().mean();
  CHECK((m.centroids.row(a) - mean_a).norm() < 1e-12);
}

TEST_CASE("k-means on four points matches exhaustive enumeration") {
  Matrix z(4, 1);
  z << 0, 1, 5, 9;
  ClusterModel m = kmeans(z, {2, 1, 10, 300});
  CHECK(m.inertia == doctest::Approx(oracle::min_two_cluster_inertia(z)).epsilon(1e-12));
}

TEST_CASE("k-means configuration errors") {
  Matrix z(3, 1);
  z << 0, 1, 2;
  CHECK_THROWS_AS(kmeans(z, {4, 0, 10, 300}), ConfigError);
  Matrix dup(3, 1);
  dup << 1, 1, 1;
  CHECK_THROWS_AS(kmeans(dup, {2, 0, 10, 300}), ConfigError);
}

TEST_CASE("property: k-means assignments are nearest-centroid and clusters non-empty") {
  CounterRng rng(55);
  for (int trial = 0; trial < 50; ++trial) {
    const auto n = static_cast<Eigen::Index>(5 + rng.uniform_index(60));
    const auto p = static_cast<Eigen::Index>(1 + rng.uniform_index(4));
    Matrix z(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < p; ++j) z(i, j) = rng.normal() + (i % 3) * 2.0;
    const std::size_t k = 1 + rng.uniform_index(std::min<std::size_t>(6, static_cast<std::size_t>(n)));
    ClusterModel m = kmeans(z, {k, rng.next_u64(), 3, 300});
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int a = m.assignments[static_cast<std::size_t>(i)];
      counts[static_cast<std::size_t>(a)]++;
      const double da = (z.row(i) - m.centroids.row(a)).squaredNorm();
      for (Eigen::Index c = 0; c < m.centroids.rows(); ++c)
        CHECK(da <= (z.row(i) - m.centroids.row(c)).squaredNorm() + 1e-12);
    }
    for (int c : counts) CHECK(c > 0);
    CHECK(m.inertia == doctest::Approx(inertia(z, m.centroids, m.assignments)));
  }
}

TEST_CASE("k-means is deterministic per seed") {
  CounterRng rng(6);
  Matrix z(100, 3);
  for (Eigen::Index i = 0; i < 100; ++i)
    for (Eigen::Index j = 0; j < 3; ++j) z(i, j) = rng.normal();
  ClusterModel a = kmeans(z, {5, 77, 10, 300});
  ClusterModel b = kmeans(z, {5, 77, 10, 300});
  CHECK(a.assignments == b.assignments);
  CHECK(a.centroids == b.centroids);
}

TEST_CASE("relevance ordering is farthest first") {
  ClusterModel m;
  m.k = 3;
  m.centroids.resize(3, 1);
  m.centroids << 3, -1, 2;
  RelevanceOrdering o = order_clusters(m, vec({0}));
  CHECK(o.distances == std::vector<double>{3, 1, 2});
  CHECK(o.order == std::vector<int>{0, 2, 1});

  RelevanceOrdering at1 = order_clusters(m, vec({-1}));
  CHECK(at1.order.back() == 1);

  m.centroids << 1, -1, 1;
  CHECK(order_clusters(m, vec({0})).order == std::vector<int>{0, 1, 2});
}

TEST_CASE("localized interval examples") {
  TwoClusterCase c;
  Interval global = localized_interval(c.scores, c.assign, {true, true}, 1e-3, 0.1, c.ref);
  CHECK(global.width() == 20.0);
  Interval local = localized_interval(c.scores, c.assign, {true, false}, 1e-3, 0.1, c.ref);
  CHECK(local.lo() == -1.0);
  CHECK(local.hi() == 1.0);
  // With equal weights the active set no longer matters.
  CHECK(localized_interval(c.scores, c.assign, {true, false}, 1.0, 0.1, c.ref) == global);
}

TEST_CASE("greedy trajectory on the two-cluster case") {
  TwoClusterCase c;
  Trajectory t = greedy_trajectory(c.support, ordering_of({1, 0}), c.settings, c.ref);
  REQUIRE(t.steps.size() == 2);
  CHECK(t.steps[0].width_current == 20.0);
  CHECK(t.steps[0].active_clusters == std::vector<int>{0, 1});
  CHECK(t.steps[1].width_current == 2.0);
  CHECK(t.steps[1].accepted);
  CHECK(t.steps[1].active_clusters == std::vector<int>{0});
  CHECK(t.delta_w == std::vector<double>{-18.0});
  CHECK(t.w0 == 20.0);
  CHECK(t.w_min == 2.0);
  CHECK(t.w_red == 18.0);
  CHECK(t.r_red == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(!t.degenerate);
}

TEST_CASE("greedy trajectory rejects a widening step") {
  TwoClusterCase c;
  // Dropping the low-score cluster widens nothing here but cannot narrow;
  // the candidate is still recorded.
  Trajectory t = greedy_trajectory(c.support, ordering_of({0, 1}), c.settings, c.ref);
  CHECK(t.steps[1].width_candidate == 20.0);
  CHECK(t.w_min == 20.0);
  CHECK(t.r_red == 0.0);

  std::vector<double> s{1, 1, 1, 1, 1, 1, 1, 50};
  std::vector<int> a{0, 0, 0, 0, 1, 1, 1, 1};
  CalibrationSupport sup(s, a, 2);
  Trajectory u = greedy_trajectory(sup, ordering_of({0, 1}), {1e-3, 0.2, false}, {0, 1});
  CHECK(u.steps[1].width_candidate > u.w0);
  CHECK(!u.steps[1].accepted);
  CHECK(u.steps[1].width_current == u.w0);
  CHECK(u.steps[1].active_clusters == std::vector<int>{0, 1});
  CHECK(u.delta_w[0] > 0);
}

TEST_CASE("identical clusters have zero reducible width") {
  std::vector<double> s{1, 2, 3, 1, 2, 3, 1, 2, 3};
  std::vector<int> a{0, 0, 0, 1, 1, 1, 2, 2, 2};
  CalibrationSupport sup(s, a, 3);
  LocalizationSettings set{1e-3, 0.1, false};
  Trajectory t = greedy_trajectory(sup, ordering_of({2, 0, 1}), set, {0, 1});
  for (const auto& st : t.steps) CHECK(st.width_candidate == t.w0);
  CHECK(t.r_red == 0.0);
  for (double e : cluster_effects(sup, set, {0, 1})) CHECK(e == 0.0);
}

TEST_CASE("decomposition of reported widths") {
  Decomposition d = decompose_width(4855.40, 4545.24);
  CHECK(d.w_red == doctest::Approx(310.16).epsilon(1e-12));
  CHECK(std::abs(d.r_red - 0.0639) <= 1e-4);
  Decomposition z = decompose_width(0.0, 0.0);
  CHECK(z.degenerate);
  CHECK(z.r_red == 0.0);
}

TEST_CASE("cluster effects on the two-cluster case") {
  TwoClusterCase c;
  auto e = cluster_effects(c.support, c.settings, c.ref);
  CHECK(e[1] == -18.0);
  CHECK(e[0] >= 0.0);
  CHECK(std::min_element(e.begin(), e.end()) - e.begin() == 1);
  CalibrationSupport one(c.scores, std::vector<int>(8, 0), 1);
  CHECK_THROWS_AS(cluster_effects(one, c.settings, c.ref), InputError);
}

TEST_CASE("localisation settings validation") {
  CHECK_THROWS_AS((LocalizationSettings{0.0, 0.1, false}.validate()), ConfigError);
  CHECK_THROWS_AS((LocalizationSettings{1.5, 0.1, false}.validate()), ConfigError);
  CHECK_THROWS_AS((LocalizationSettings{1e-3, 1.0, false}.validate()), ConfigError);
  CHECK_NOTHROW((LocalizationSettings{1.0, 0.5, true}.validate()));
}

TEST_CASE("property: trajectories are monotone and R_red lies in [0, 1)") {
  CounterRng rng(808);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t k = 1 + rng.uniform_index(8);
    const std::size_t n = k + rng.uniform_index(60);
    std::vector<double> s(n);
    std::vector<int> a(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<int>(i < k ? i : rng.uniform_index(k));
      s[i] = rng.uniform(0, 1) * (1.0 + static_cast<double>(a[i]) * rng.uniform(0, 3));
    }
    CalibrationSupport sup(s, a, k);
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = k; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    const LocalizationSettings set{rng.uniform() < 0.2 ? 1.0 : 1e-3, rng.uniform(0.05, 0.5),
                                   rng.uniform() < 0.3};
    const PredictiveReference ref{rng.normal(), rng.uniform(0.01, 3)};
    Trajectory t = greedy_trajectory(sup, ordering_of(order), set, ref);
    CHECK(t.steps.size() == k);
    CHECK(t.steps[0].active_clusters.size() == k);
    CHECK(t.steps[0].width_current == t.w0);
    for (std::size_t i = 1; i < t.steps.size(); ++i) {
      CHECK(t.steps[i].width_current <= t.steps[i - 1].width_current);
      CHECK(t.steps[i].candidate_active.size() == k - i);
    }
    CHECK(t.w_red >= 0.0);
    if (t.w0 > 0) {
      CHECK(t.r_red >= 0.0);
      CHECK(t.r_red < 1.0);
    }
    if (set.eps_min == 1.0) CHECK(t.r_red == 0.0);
    // Step 0 is the plain global interval.
    CHECK(t.w0 == conformal_interval(ref.mu, ref.sigma,
                                     empirical_quantile(s, set.alpha, set.finite_sample_correction))
                      .width());
  }
}
