#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "localcp/conformal.hpp"
#include "localcp/data.hpp"
#include "localcp/diagnostics.hpp"
#include "localcp/error.hpp"
#include "localcp/localize.hpp"
#include "localcp/models.hpp"

namespace localcp {

inline constexpr const char* kToolVersion = "1.0.0";

enum class ModelKind { ridge, forest };

const char* to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& s);

/// Everything needed to reproduce a run. Defaults: alpha 0.10, K 5, K2 8,
/// eps_min 1e-3, unit lambdas, 500 trees, ridge lambda 1.
struct RunConfig {
  ModelKind model = ModelKind::forest;
  double ridge_lambda = 1.0;
  ForestParams forest;
  double sigma_floor = kDefaultSigmaFloor;
  double alpha = 0.10;
  std::size_t k = 5;
  std::optional<std::size_t> k2;
  EmbeddingWeights lambda;
  double eps_min = 1e-3;
  std::uint64_t seed = 0;
  SplitFractions fractions;
  bool finite_sample_correction = false;
  /// Fraction of the calibration split reserved for the ridge residual model;
  /// 0 reuses the whole calibration split.
  double aux_split_fraction = 0.0;
  std::size_t n_init = 10;
  std::size_t max_iter = 300;
  std::size_t threads = 1;
  std::string dataset_name = "dataset";

  /// Throws ConfigError on any violated precondition.
  void validate() const;
  LocalizationSettings localization() const;
  nlohmann::json to_json() const;
};

/// Seeds of the independent pipeline stages, derived from the master seed.
struct StageSeeds {
  std::uint64_t split;
  std::uint64_t model;
  std::uint64_t clustering;
  std::uint64_t synthetic;
};
StageSeeds stage_seeds(std::uint64_t master);

/// Fitted model plus everything computed on the calibration split.
struct PreparedRun {
  Dataset data;  // features standardised with the training-row scaler
  Standardizer feature_scaler;
  DataSplit split;     // split.cal holds the rows that produce conformal scores
  IndexList aux_rows;  // rows used by the ridge residual model
  std::shared_ptr<const RegressionModel> model;
  Vector mu_cal;
  Vector sigma_cal;
  CalibrationScores scores;
  Vector residuals_cal;  // raw y - f(x), aligned with split.cal
};

PreparedRun prepare_run(const Dataset& raw, const RunConfig& cfg);

/// Embedding and clustering of the calibration rows, fitted once per K.
struct Localizer {
  EmbeddingSpec embedding;
  ClusterModel clusters;
  std::shared_ptr<const CalibrationSupport> support;
};

Localizer fit_localizer(const PreparedRun& run, std::size_t k, const RunConfig& cfg);

struct InstanceExplanation {
  std::size_t test_row = 0;
  double y_true = 0.0;
  PredictiveReference ref;
  RelevanceOrdering ordering;
  Trajectory trajectory;
  std::vector<double> cluster_effects;  // empty when K = 1
  Interval global_interval;
  Interval min_interval;
};

/// One explanation per test row, in test-split order regardless of threads.
std::vector<InstanceExplanation> explain_instances(const PreparedRun& run, const Localizer& loc,
                                                   const RunConfig& cfg);

struct MethodRow {
  std::string method;
  std::string dataset;
  double alpha = 0.0;
  std::size_t k = 0;
  double mean_width = 0.0;
  double coverage = 0.0;
  std::optional<double> reducible_ratio;
};

/// Normalized CP, Mondrian CP, and the global / minimal-width localised
/// intervals on the test split.
std::vector<MethodRow> evaluate_methods(const PreparedRun& run, const RunConfig& cfg);

struct GranularityRow {
  std::size_t k = 0;
  RiaResult ria;
  double heterogeneity = 0.0;
  double mean_r_red = 0.0;
};

struct DiagnosticsSummary {
  std::string dataset;
  std::string model;
  std::vector<GranularityRow> per_k;
  std::optional<double> gs_ria_w;
  std::optional<double> gs_ria_r;
};

std::vector<InstanceRecord> instance_records(const std::vector<InstanceExplanation>& ex);

/// RIA and heterogeneity at cfg.k and cfg.k2 (default 8), GS between them.
DiagnosticsSummary diagnose(const PreparedRun& run, const RunConfig& cfg);

/// Runs fn, rethrowing any library error as a StageError naming `stage`.
template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace localcp
