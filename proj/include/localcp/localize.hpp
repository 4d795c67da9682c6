#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "localcp/conformal.hpp"
#include "localcp/data.hpp"
#include "localcp/models.hpp"

namespace localcp {

// ---------------------------------------------------------------------------
// Model-aware embedding
// ---------------------------------------------------------------------------

/// Channel standardisers plus lambda weights for z = [lx x, lmu mu, lsigma sigma].
struct EmbeddingSpec {
  EmbeddingWeights lambda;
  Standardizer x_channel;
  Standardizer mu_channel;     // one column
  Standardizer sigma_channel;  // one column

  std::size_t input_dim() const { return x_channel.cols(); }
  std::size_t dim() const { return input_dim() + 2; }

  /// Identity standardisers; useful when inputs are already commensurate.
  static EmbeddingSpec identity(std::size_t input_dim, EmbeddingWeights lambda = {});
};

/// Fits every channel standardiser on the calibration rows.
EmbeddingSpec fit_embedding(const Matrix& x_cal, const Vector& mu_cal, const Vector& sigma_cal,
                            EmbeddingWeights lambda);

/// n x (d + 2) matrix of embedded rows.
Matrix embed(const Matrix& x, const Vector& mu, const Vector& sigma, const EmbeddingSpec& spec);
Vector embed_one(const Vector& x, double mu, double sigma, const EmbeddingSpec& spec);

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

struct KMeansOptions {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  std::size_t n_init = 10;
  std::size_t max_iter = 300;
};

struct ClusterModel {
  Matrix centroids;          // K x p
  std::vector<int> assignments;
  std::size_t k = 0;
  double inertia = 0.0;
  std::uint64_t seed = 0;

  /// Nearest centroid by Euclidean distance; ties go to the lowest id.
  int nearest(const Vector& z) const;
};

/// Lloyd iterations from k-means++ seeds, best of n_init restarts by inertia.
/// Empty clusters are reseeded at the point farthest from its centroid.
/// Throws ConfigError when K exceeds the number of (distinct) points.
ClusterModel kmeans(const Matrix& z, const KMeansOptions& options);

/// Sum of squared distances of rows to their assigned centroid.
double inertia(const Matrix& z, const Matrix& centroids, std::span<const int> assignments);

struct RelevanceOrdering {
  std::vector<int> order;         // farthest cluster first
  std::vector<double> distances;  // indexed by cluster id
};

RelevanceOrdering order_clusters(const ClusterModel& model, const Vector& z_star);

// ---------------------------------------------------------------------------
// Localisation
// ---------------------------------------------------------------------------

struct LocalizationSettings {
  double eps_min = 1e-3;
  double alpha = 0.1;
  bool finite_sample_correction = false;

  void validate() const;
};

/// Calibration scores together with their cluster assignments; immutable and
/// shared by every test instance.
class CalibrationSupport {
 public:
  CalibrationSupport(std::span<const double> scores, std::vector<int> assignments, std::size_t k);

  std::size_t k() const { return k_; }
  std::size_t size() const { return assignments_.size(); }
  const SortedScores& scores() const { return sorted_; }
  std::span<const int> assignments() const { return assignments_; }

  /// Width of the weighted conformal interval for the given active clusters.
  Interval interval(const std::vector<bool>& active, const LocalizationSettings& settings,
                    PredictiveReference ref) const;

 private:
  SortedScores sorted_;
  std::vector<int> assignments_;
  std::size_t k_;
};

/// Weights 1 on active clusters, eps_min elsewhere; then weighted quantile and
/// interval around the fixed reference.
Interval localized_interval(std::span<const double> scores, std::span<const int> assignments,
                            const std::vector<bool>& active, double eps_min, double alpha,
                            PredictiveReference ref);

struct TrajectoryStep {
  std::size_t step = 0;
  double width_current = 0.0;
  double width_candidate = 0.0;
  bool accepted = true;
  std::vector<int> candidate_active;  // clusters at weight 1 in the candidate
  std::vector<int> active_clusters;   // clusters at weight 1 in the held configuration
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  std::vector<double> delta_w;  // W_s - W_cur, recorded before the accept test
  double w0 = 0.0;
  double w_min = 0.0;
  double w_red = 0.0;
  double r_red = 0.0;
  bool degenerate = false;  // W0 == 0, R_red reported as 0
};

struct Decomposition {
  double w_red = 0.0;
  double r_red = 0.0;
  bool degenerate = false;
};

/// W_red = W0 - Wmin and R_red = W_red / W0 (0 and flagged when W0 == 0).
Decomposition decompose_width(double w0, double w_min);

/// Greedy accept-revert path: step s downweights the s farthest clusters and
/// is accepted iff its width does not exceed the current one.
Trajectory greedy_trajectory(const CalibrationSupport& support, const RelevanceOrdering& ordering,
                             const LocalizationSettings& settings, PredictiveReference ref);

/// Entry k: width with only cluster k downweighted, minus the global width.
std::vector<double> cluster_effects(const CalibrationSupport& support,
                                    const LocalizationSettings& settings,
                                    PredictiveReference ref);

}  // namespace localcp
