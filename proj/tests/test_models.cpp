#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "localcp/diagnostics.hpp"
#include "localcp/error.hpp"
#include "localcp/models.hpp"
#include "localcp/rng.hpp"

using namespace localcp;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Vector scalar(double x) { return vec({x}); }

Matrix column(std::initializer_list<double> v) { return vec(v); }

std::vector<std::size_t> all_rows(Eigen::Index n) {
  std::vector<std::size_t> r(static_cast<std::size_t>(n));
  std::iota(r.begin(), r.end(), 0);
  return r;
}

// Brute-force best threshold: every midpoint between consecutive distinct
// sorted values, scored by total within-side squared error.
double best_threshold_oracle(const std::vector<double>& x, const std::vector<double>& y,
                             std::size_t min_leaf) {
  std::vector<double> xs = x;
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  double best_sse = std::numeric_limits<double>::infinity(), best_t = 0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double t = 0.5 * (xs[i] + xs[i + 1]);
    std::vector<double> l, r;
    for (std::size_t j = 0; j < x.size(); ++j) (x[j] <= t ? l : r).push_back(y[j]);
    if (l.size() < min_leaf || r.size() < min_leaf) continue;
    double sse = 0;
    for (const auto* side : {&l, &r}) {
      double m = 0;
      for (double v : *side) m += v;
      m /= static_cast<double>(side->size());
      for (double v : *side) sse += (v - m) * (v - m);
    }
    if (sse < best_sse) {
      best_sse = sse;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace

TEST_CASE("ridge with no penalty recovers an exact line") {
  Matrix x = column({0, 1, 2, 3});
  Vector y = vec({0, 2, 4, 6});
  LinearFit fit = solve_ridge(x, y, 0.0);
  CHECK(fit.coefficients(0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(std::abs(fit.intercept) < 1e-12);
}

TEST_CASE("ridge on a constant target gives zero slope and the constant intercept") {
  Matrix x = column({0, 1, 2, 3});
  Vector y = vec({3, 3, 3, 3});
  LinearFit fit = solve_ridge(x, y, 0.5);
  CHECK(std::abs(fit.coefficients(0)) < 1e-12);
  CHECK(fit.intercept == doctest::Approx(3.0));
}

TEST_CASE("ridge with a huge penalty shrinks towards the mean") {
  Matrix x = column({0, 1, 2, 3});
  Vector y = vec({0, 2, 4, 6});
  LinearFit fit = solve_ridge(x, y, 1e9);
  CHECK(std::abs(fit.coefficients(0)) < 1e-6);
  CHECK(fit.intercept == doctest::Approx(3.0).epsilon(1e-6));
}

TEST_CASE("ridge without penalty on collinear columns is a numeric error") {
  Matrix x(4, 2);
  x << 0, 0, 1, 2, 2, 4, 3, 6;
  CHECK_THROWS_AS(solve_ridge(x, vec({1, 2, 3, 4}), 0.0), NumericError);
  CHECK_NOTHROW(solve_ridge(x, vec({1, 2, 3, 4}), 0.1));
  CHECK_THROWS_AS(solve_ridge(x, vec({1, 2, 3, 4}), -1.0), ConfigError);
}

TEST_CASE("property: ridge satisfies its normal equations") {
  CounterRng rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = static_cast<Eigen::Index>(5 + rng.uniform_index(40));
    const auto d = static_cast<Eigen::Index>(1 + rng.uniform_index(4));
    Matrix x(n, d);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.normal();
      y(i) = rng.normal() * 3.0;
    }
    const double lambda = rng.uniform(0.01, 10.0);
    LinearFit fit = solve_ridge(x, y, lambda);
    CHECK(ridge_normal_residual(x, y, lambda, fit) <= 1e-8);
  }
}

TEST_CASE("ridge residual model") {
  SUBCASE("perfect fit floors the instability") {
    Matrix x = column({0, 1, 2, 3, 4});
    Vector y = vec({0, 2, 4, 6, 8});
    LinearRidgeModel m = ridge_fit_aux(ridge_fit(x, y, 0.0), x, y);
    CHECK(m.predict(scalar(3.0)) == doctest::Approx(6.0));
    CHECK(m.instability(scalar(3.0)) == m.sigma_floor());
    CHECK(m.instability(scalar(-100.0)) >= m.sigma_floor());
  }
  SUBCASE("constant absolute residual is recovered") {
    Matrix x = column({0, 1, 2, 3, 4, 5});
    Vector y = vec({0.5, 1.5, 2.5, 3.5, 4.5, 5.5});
    // Mean model y = x leaves |residual| = 0.5 everywhere.
    LinearRidgeModel base(LinearFit{vec({1.0}), 0.0}, 0.0, kDefaultSigmaFloor);
    LinearRidgeModel m = ridge_fit_aux(base, x, y);
    CHECK(m.instability(scalar(2.5)) == doctest::Approx(0.5).epsilon(1e-10));
  }
  SUBCASE("instability before the residual fit is a state error") {
    LinearRidgeModel m = ridge_fit(column({0, 1, 2}), vec({0, 1, 2}), 0.0);
    CHECK_THROWS_AS(m.instability(scalar(1.0)), StateError);
  }
}

TEST_CASE("ridge instability follows heteroscedastic noise") {
  CounterRng rng(5);
  const Eigen::Index n = 2000;
  Matrix x(n, 1);
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(0.0, 10.0);
    y(i) = 1.0 + 0.5 * x(i, 0) + rng.normal() * (0.2 + 0.5 * x(i, 0));
  }
  LinearRidgeModel m = ridge_fit_aux(ridge_fit(x, y, 1.0), x, y);
  Vector sig = m.instability(x);
  std::vector<double> s(sig.data(), sig.data() + n), xv(x.data(), x.data() + n);
  auto rho = spearman(s, xv);
  REQUIRE(rho.has_value());
  CHECK(*rho > 0.8);
}

TEST_CASE("forest on a constant target predicts the constant") {
  Matrix x = column({0, 1, 2, 3, 4, 5, 6, 7});
  Vector y = Vector::Constant(8, 4.25);
  ForestParams p;
  p.n_trees = 20;
  p.seed = 1;
  ForestModel f = forest_fit(x, y, p);
  CHECK(f.predict(scalar(3.3)) == 4.25);
  CHECK(f.instability(scalar(3.3)) == p.sigma_floor);
}

TEST_CASE("single tree without bootstrap is the forest") {
  Matrix x = column({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  Vector y = vec({1, 3, 2, 5, 4, 8, 7, 9, 6, 10});
  ForestParams p;
  p.n_trees = 1;
  p.bootstrap = false;
  p.seed = 9;
  ForestModel f = forest_fit(x, y, p);
  for (double q : {-1.0, 0.5, 4.4, 9.0, 12.0})
    CHECK(f.predict(scalar(q)) == f.trees()[0].predict(scalar(q)));
  CHECK(f.instability(scalar(1.0)) == p.sigma_floor);
}

TEST_CASE("depth-one tree on a step function finds the brute-force threshold") {
  std::vector<double> xs, ys;
  for (int i = 0; i < 10; ++i) {
    xs.push_back(i);
    ys.push_back(i < 5 ? 0.0 : 1.0);
  }
  Matrix x(10, 1);
  Vector y(10);
  for (int i = 0; i < 10; ++i) {
    x(i, 0) = xs[static_cast<std::size_t>(i)];
    y(i) = ys[static_cast<std::size_t>(i)];
  }
  ForestParams p;
  p.max_depth = 1;
  const auto rows = all_rows(10);
  RegressionTree t = fit_tree(x, y, rows, p, 3);
  REQUIRE(t.node_count() == 3);
  CHECK(t.threshold[0] == best_threshold_oracle(xs, ys, p.min_leaf));
  CHECK(t.predict(scalar(2.0)) == 0.0);
  CHECK(t.predict(scalar(7.0)) == 1.0);

  p.n_trees = 50;
  p.seed = 4;
  ForestModel f = forest_fit(x, y, p);
  CHECK(f.predict(scalar(2.0)) >= 0.0);
  CHECK(f.predict(scalar(2.0)) <= 0.5);
  CHECK(f.predict(scalar(7.0)) >= 0.5);
}

TEST_CASE("property: single split agrees with brute force on random data") {
  CounterRng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 4 + rng.uniform_index(20);
    std::vector<double> xs(n), ys(n);
    Matrix x(static_cast<Eigen::Index>(n), 1);
    Vector y(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = static_cast<double>(rng.uniform_index(12));
      ys[i] = std::round(rng.normal() * 8.0) / 4.0 + (xs[i] > 6 ? 3.0 : 0.0);
      x(static_cast<Eigen::Index>(i), 0) = xs[i];
      y(static_cast<Eigen::Index>(i)) = ys[i];
    }
    ForestParams p;
    p.max_depth = 1;
    p.min_leaf = 1;
    RegressionTree t = fit_tree(x, y, all_rows(static_cast<Eigen::Index>(n)), p, 0);
    if (t.node_count() == 1) continue;  // no improving split exists
    // Compare achieved SSE rather than thresholds: ties may pick either.
    const double oracle_t = best_threshold_oracle(xs, ys, 1);
    auto sse_at = [&](double thr) {
      double sl = 0, sr = 0, nl = 0, nr = 0;
      for (std::size_t i = 0; i < n; ++i) (xs[i] <= thr ? (sl += ys[i], nl += 1) : (sr += ys[i], nr += 1));
      double sse = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double m = xs[i] <= thr ? sl / nl : sr / nr;
        sse += (ys[i] - m) * (ys[i] - m);
      }
      return sse;
    };
    CHECK(sse_at(t.threshold[0]) == doctest::Approx(sse_at(oracle_t)).epsilon(1e-9));
  }
}

TEST_CASE("forest aggregates tree predictions") {
  SUBCASE("two trees at 0 and 2") {
    ForestModel f({RegressionTree::constant(0.0), RegressionTree::constant(2.0)}, {0, 1}, 1, {});
    CHECK(f.predict(scalar(0.0)) == 1.0);
    CHECK(f.instability(scalar(0.0)) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  }
  SUBCASE("identical trees floor the instability") {
    ForestModel f({RegressionTree::constant(1.0), RegressionTree::constant(1.0),
                   RegressionTree::constant(1.0)},
                  {0, 1, 2}, 1, {});
    CHECK(f.instability(scalar(0.0)) == kDefaultSigmaFloor);
  }
}

TEST_CASE("ridge model on y = 2x with zero residuals") {
  LinearRidgeModel m(LinearFit{vec({2.0}), 0.0}, 0.0, kDefaultSigmaFloor,
                     LinearFit{vec({0.0}), 0.0});
  CHECK(m.predict(scalar(3.0)) == 6.0);
  CHECK(m.instability(scalar(3.0)) == kDefaultSigmaFloor);
}

TEST_CASE("dimension mismatch is an input error") {
  LinearRidgeModel m(LinearFit{vec({2.0}), 0.0}, 0.0, kDefaultSigmaFloor,
                     LinearFit{vec({0.0}), 0.0});
  CHECK_THROWS_AS(m.predict(vec({1.0, 2.0})), InputError);
  ForestModel f({RegressionTree::constant(0.0)}, {0}, 2, {});
  CHECK_THROWS_AS(f.predict(scalar(1.0)), InputError);
}

TEST_CASE("forest rejects bad configuration") {
  Matrix x = column({0, 1, 2, 3});
  Vector y = vec({0, 1, 2, 3});
  ForestParams p;
  p.features_per_split = 2;
  CHECK_THROWS_AS(forest_fit(x, y, p), ConfigError);
  p = {};
  p.n_trees = 0;
  CHECK_THROWS_AS(forest_fit(x, y, p), ConfigError);
  CHECK_THROWS_AS(forest_fit(column({1}), vec({1}), ForestParams{}), FitError);
}

TEST_CASE("property: forest predictions stay within the target range and instability is floored") {
  CounterRng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const auto n = static_cast<Eigen::Index>(10 + rng.uniform_index(60));
    const auto d = static_cast<Eigen::Index>(1 + rng.uniform_index(4));
    Matrix x(n, d);
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) x(i, j) = rng.uniform(-3, 3);
      y(i) = x(i, 0) * 2 + rng.normal();
    }
    ForestParams p;
    p.n_trees = 15;
    p.seed = rng.next_u64();
    if (rng.uniform() < 0.5) p.max_depth = 1 + rng.uniform_index(5);
    ForestModel f = forest_fit(x, y, p);
    for (int q = 0; q < 20; ++q) {
      Vector xq(d);
      for (Eigen::Index j = 0; j < d; ++j) xq(j) = rng.uniform(-5, 5);
      const double mu = f.predict(xq);
      CHECK(mu >= y.minCoeff());
      CHECK(mu <= y.maxCoeff());
      CHECK(f.instability(xq) >= p.sigma_floor);
    }
    for (const auto& t : f.trees())
      if (p.max_depth) CHECK(t.depth() <= *p.max_depth);
  }
}

TEST_CASE("forest fit is independent of the thread count") {
  CounterRng rng(8);
  Matrix x(200, 3);
  Vector y(200);
  for (Eigen::Index i = 0; i < 200; ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) x(i, j) = rng.normal();
    y(i) = x(i, 0) - x(i, 2) + rng.normal() * 0.3;
  }
  ForestParams p;
  p.n_trees = 40;
  p.seed = 123;
  ForestModel a = forest_fit(x, y, p);
  p.n_threads = 4;
  ForestModel b = forest_fit(x, y, p);
  CHECK(a.to_json().dump() == b.to_json().dump());
}

TEST_CASE("model documents round-trip") {
  CounterRng rng(12);
  Matrix x(60, 2);
  Vector y(60);
  for (Eigen::Index i = 0; i < 60; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    y(i) = x(i, 0) + 0.1 * rng.normal();
  }
  ForestParams p;
  p.n_trees = 5;
  ForestModel f = forest_fit(x, y, p);
  auto f2 = model_from_json(f.to_json());
  LinearRidgeModel r = ridge_fit_aux(ridge_fit(x, y, 1.0), x, y);
  auto r2 = model_from_json(r.to_json());
  for (Eigen::Index i = 0; i < 60; ++i) {
    Vector xi = x.row(i).transpose();
    CHECK(f2->predict(xi) == f.predict(xi));
    CHECK(f2->instability(xi) == f.instability(xi));
    CHECK(r2->predict(xi) == r.predict(xi));
    CHECK(r2->instability(xi) == r.instability(xi));
  }
  nlohmann::json bad = f.to_json();
  bad["version"] = 99;
  CHECK_THROWS_AS(model_from_json(bad), InputError);
  CHECK_THROWS_AS(model_from_json(nlohmann::json{{"format", "other"}}), InputError);
}
