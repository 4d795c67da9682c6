#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "localcp/error.hpp"
#include "localcp/models.hpp"

namespace localcp {

void RegressionModel::check_dim(const Vector& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim()) {
    throw InputError(
        fmt::format("model expects {} features, got {}", input_dim(), x.size()));
  }
}

Vector RegressionModel::predict(const Matrix& x) const {
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = predict(Vector(x.row(i).transpose()));
  return out;
}

Vector RegressionModel::instability(const Matrix& x) const {
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out(i) = instability(Vector(x.row(i).transpose()));
  }
  return out;
}

namespace {

struct Centred {
  Matrix x;
  Vector y;
  Vector x_mean;
  double y_mean;
};

Centred centre(const Matrix& x, const Vector& y) {
  if (x.rows() != y.size()) {
    throw InputError(fmt::format("ridge: {} feature rows but {} targets", x.rows(), y.size()));
  }
  if (x.rows() < 1 || x.cols() < 1) throw InputError("ridge: empty design matrix");
  if (!x.allFinite() || !y.allFinite()) throw InputError("ridge: non-finite input");
  Centred c;
  c.x_mean = x.colwise().mean().transpose();
  c.y_mean = y.mean();
  c.x = x.rowwise() - c.x_mean.transpose();
  c.y = y.array() - c.y_mean;
  return c;
}

Matrix gram(const Centred& c, double reg_strength) {
  Matrix a = c.x.transpose() * c.x;
  a.diagonal().array() += reg_strength;
  return a;
}

}  // namespace

LinearFit solve_ridge(const Matrix& x, const Vector& y, double reg_strength) {
  if (!(reg_strength >= 0.0) || !std::isfinite(reg_strength)) {
    throw ConfigError("ridge regularisation strength must be finite and >= 0");
  }
  const Centred c = centre(x, y);
  const Matrix a = gram(c, reg_strength);
  const Vector b = c.x.transpose() * c.y;

  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  if (qr.rank() < a.cols()) {
    throw NumericError(
        "ridge normal equations are singular (collinear or constant columns); use a "
        "regularisation strength > 0");
  }
  LinearFit fit;
  // LDLT for the symmetric solve, then one step of iterative refinement.
  Eigen::LDLT<Matrix> ldlt(a);
  fit.coefficients = ldlt.solve(b);
  fit.coefficients += ldlt.solve(b - a * fit.coefficients);
  fit.intercept = c.y_mean - c.x_mean.dot(fit.coefficients);
  return fit;
}

double ridge_normal_residual(const Matrix& x, const Vector& y, double reg_strength,
                             const LinearFit& fit) {
  const Centred c = centre(x, y);
  return (gram(c, reg_strength) * fit.coefficients - c.x.transpose() * c.y)
      .lpNorm<Eigen::Infinity>();
}

LinearRidgeModel::LinearRidgeModel(LinearFit mean_fit, double reg_strength, double sigma_floor,
                                   std::optional<LinearFit> residual_fit)
    : mean_fit_(std::move(mean_fit)),
      residual_fit_(std::move(residual_fit)),
      reg_strength_(reg_strength),
      sigma_floor_(sigma_floor) {
  if (!(sigma_floor_ > 0.0)) throw ConfigError("sigma floor must be > 0");
  if (residual_fit_ && residual_fit_->coefficients.size() != mean_fit_.coefficients.size()) {
    throw InputError("residual model dimension does not match the mean model");
  }
}

double LinearRidgeModel::predict(const Vector& x) const {
  check_dim(x);
  return mean_fit_.predict(x);
}

double LinearRidgeModel::instability(const Vector& x) const {
  check_dim(x);
  if (!residual_fit_) {
    throw StateError("ridge instability requires ridge_fit_aux on calibration residuals");
  }
  return std::max(residual_fit_->predict(x), sigma_floor_);
}

LinearRidgeModel ridge_fit(const Matrix& x, const Vector& y, double reg_strength,
                           double sigma_floor) {
  return LinearRidgeModel(solve_ridge(x, y, reg_strength), reg_strength, sigma_floor);
}

LinearRidgeModel ridge_fit_aux(const LinearRidgeModel& model, const Matrix& x_cal,
                               const Vector& y_cal) {
  if (x_cal.rows() != y_cal.size()) {
    throw InputError("ridge_fit_aux: calibration rows and targets differ in length");
  }
  Vector abs_residuals(x_cal.rows());
  for (Eigen::Index i = 0; i < x_cal.rows(); ++i) {
    abs_residuals(i) = std::abs(y_cal(i) - model.predict(Vector(x_cal.row(i).transpose())));
  }
  return LinearRidgeModel(model.mean_fit(), model.reg_strength(), model.sigma_floor(),
                          solve_ridge(x_cal, abs_residuals, model.reg_strength()));
}

}  // namespace localcp
