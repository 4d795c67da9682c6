#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "json.hpp"
#include "localcp/data.hpp"

namespace localcp {

inline constexpr double kDefaultSigmaFloor = 1e-6;

/// Fixed per-instance anchor: point prediction and instability scale.
struct PredictiveReference {
  double mu = 0.0;
  double sigma = 1.0;
};

/// Point predictor with an instance-level instability proxy. Fitted models are
/// immutable; predict and instability are pure.
class RegressionModel {
 public:
  virtual ~RegressionModel() = default;

  virtual std::size_t input_dim() const = 0;
  virtual double predict(const Vector& x) const = 0;
  /// Always >= sigma_floor().
  virtual double instability(const Vector& x) const = 0;
  virtual double sigma_floor() const = 0;
  virtual nlohmann::json to_json() const = 0;

  PredictiveReference reference(const Vector& x) const { return {predict(x), instability(x)}; }

  Vector predict(const Matrix& x) const;
  Vector instability(const Matrix& x) const;

 protected:
  void check_dim(const Vector& x) const;
};

/// Closed-form ridge solution on centred data; the intercept is unpenalised.
struct LinearFit {
  Vector coefficients;
  double intercept = 0.0;

  double predict(const Vector& x) const { return intercept + coefficients.dot(x); }
};

/// Solves (Xc'Xc + lambda I) beta = Xc'yc. Throws NumericError when the system
/// is singular (lambda = 0 with collinear or constant columns).
LinearFit solve_ridge(const Matrix& x, const Vector& y, double reg_strength);

/// Infinity norm of (Xc'Xc + lambda I) beta - Xc'yc, for verifying a fit.
double ridge_normal_residual(const Matrix& x, const Vector& y, double reg_strength,
                             const LinearFit& fit);

class LinearRidgeModel final : public RegressionModel {
 public:
  LinearRidgeModel(LinearFit mean_fit, double reg_strength, double sigma_floor,
                   std::optional<LinearFit> residual_fit = std::nullopt);

  std::size_t input_dim() const override {
    return static_cast<std::size_t>(mean_fit_.coefficients.size());
  }
  double predict(const Vector& x) const override;
  /// max(residual regression at x, sigma_floor). Requires the residual model.
  double instability(const Vector& x) const override;
  double sigma_floor() const override { return sigma_floor_; }
  nlohmann::json to_json() const override;

  using RegressionModel::instability;
  using RegressionModel::predict;

  const LinearFit& mean_fit() const { return mean_fit_; }
  const std::optional<LinearFit>& residual_fit() const { return residual_fit_; }
  double reg_strength() const { return reg_strength_; }

 private:
  LinearFit mean_fit_;
  std::optional<LinearFit> residual_fit_;
  double reg_strength_;
  double sigma_floor_;
};

LinearRidgeModel ridge_fit(const Matrix& x, const Vector& y, double reg_strength,
                           double sigma_floor = kDefaultSigmaFloor);

/// Fits the residual-magnitude regression |y - f(x)| ~ x on calibration rows,
/// reusing the main model's regularisation strength.
LinearRidgeModel ridge_fit_aux(const LinearRidgeModel& model, const Matrix& x_cal,
                               const Vector& y_cal);

/// CART regression tree with mean leaves, stored as flat node arrays.
/// A node with feature < 0 is a leaf; otherwise x[feature] <= threshold goes left.
struct RegressionTree {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  std::vector<double> value;

  double predict(const Vector& x) const;
  std::size_t node_count() const { return feature.size(); }
  std::size_t depth() const;
  static RegressionTree constant(double v);
};

struct ForestParams {
  std::size_t n_trees = 500;
  std::optional<std::size_t> max_depth;  // nullopt = unlimited
  std::size_t min_leaf = 2;
  std::size_t features_per_split = 0;    // 0 = max(1, floor(d / 3))
  std::uint64_t seed = 0;
  double sigma_floor = kDefaultSigmaFloor;
  bool bootstrap = true;                 // disabling is a test hook
  std::size_t n_threads = 1;
};

class ForestModel final : public RegressionModel {
 public:
  ForestModel(std::vector<RegressionTree> trees, std::vector<std::uint64_t> tree_seeds,
              std::size_t input_dim, ForestParams params);

  std::size_t input_dim() const override { return input_dim_; }
  /// Arithmetic mean of the tree predictions.
  double predict(const Vector& x) const override;
  /// Sample std (ddof = 1) of the tree predictions, floored at sigma_floor.
  double instability(const Vector& x) const override;
  double sigma_floor() const override { return params_.sigma_floor; }
  nlohmann::json to_json() const override;

  using RegressionModel::instability;
  using RegressionModel::predict;

  std::vector<double> tree_predictions(const Vector& x) const;
  const std::vector<RegressionTree>& trees() const { return trees_; }
  const std::vector<std::uint64_t>& tree_seeds() const { return tree_seeds_; }
  const ForestParams& params() const { return params_; }

 private:
  std::vector<RegressionTree> trees_;
  std::vector<std::uint64_t> tree_seeds_;
  std::size_t input_dim_;
  ForestParams params_;
};

/// Grows one CART tree on the given (possibly repeated) row indices.
RegressionTree fit_tree(const Matrix& x, const Vector& y, std::span<const std::size_t> rows,
                        const ForestParams& params, std::uint64_t seed);

ForestModel forest_fit(const Matrix& x, const Vector& y, const ForestParams& params);

/// Versioned JSON model documents ("localcp-model", version 1).
inline constexpr int kModelFormatVersion = 1;
std::unique_ptr<RegressionModel> model_from_json(const nlohmann::json& doc);

}  // namespace localcp
