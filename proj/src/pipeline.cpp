#include "localcp/pipeline.hpp"

#include <cmath>

#include <fmt/format.h>

#include "localcp/error.hpp"
#include "localcp/parallel.hpp"
#include "localcp/rng.hpp"

namespace localcp {

const char* to_string(ModelKind kind) { return kind == ModelKind::ridge ? "ridge" : "forest"; }

ModelKind parse_model_kind(const std::string& s) {
  if (s == "ridge") return ModelKind::ridge;
  if (s == "forest") return ModelKind::forest;
  throw ConfigError(fmt::format("unknown model '{}' (expected ridge or forest)", s));
}

void RunConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (!(eps_min > 0.0 && eps_min <= 1.0)) throw ConfigError("eps must lie in (0, 1]");
  if (k < 1) throw ConfigError("K must be >= 1");
  if (k2 && *k2 < 1) throw ConfigError("K2 must be >= 1");
  for (double l : {lambda.x, lambda.mu, lambda.sigma}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambda weights must be finite and >= 0");
  }
  if (!(lambda.x > 0.0 || lambda.mu > 0.0 || lambda.sigma > 0.0)) {
    throw ConfigError("at least one lambda weight must be > 0");
  }
  if (!(ridge_lambda >= 0.0) || !std::isfinite(ridge_lambda)) {
    throw ConfigError("ridge lambda must be finite and >= 0");
  }
  if (forest.n_trees < 1) throw ConfigError("trees must be >= 1");
  if (forest.min_leaf < 1) throw ConfigError("min leaf must be >= 1");
  if (forest.max_depth && *forest.max_depth < 1) throw ConfigError("max depth must be >= 1");
  if (!(sigma_floor > 0.0)) throw ConfigError("sigma floor must be > 0");
  if (!(aux_split_fraction >= 0.0 && aux_split_fraction < 1.0)) {
    throw ConfigError("aux split fraction must lie in [0, 1)");
  }
  if (n_init < 1 || max_iter < 1) throw ConfigError("k-means n_init and max_iter must be >= 1");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  for (double f : {fractions.train, fractions.cal, fractions.test}) {
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
  }
  if (std::abs(fractions.train + fractions.cal + fractions.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

LocalizationSettings RunConfig::localization() const {
  return {eps_min, alpha, finite_sample_correction};
}

nlohmann::json RunConfig::to_json() const {
  using nlohmann::json;
  // Thread count is omitted: outputs do not depend on it.
  return {{"model", to_string(model)},
          {"ridge_lambda", ridge_lambda},
          {"trees", forest.n_trees},
          {"max_depth", forest.max_depth ? json(*forest.max_depth) : json(nullptr)},
          {"min_leaf", forest.min_leaf},
          {"features_per_split", forest.features_per_split},
          {"sigma_floor", sigma_floor},
          {"alpha", alpha},
          {"k", k},
          {"k2", k2 ? json(*k2) : json(nullptr)},
          {"lambda_x", lambda.x},
          {"lambda_mu", lambda.mu},
          {"lambda_sigma", lambda.sigma},
          {"eps", eps_min},
          {"seed", seed},
          {"train_frac", fractions.train},
          {"cal_frac", fractions.cal},
          {"test_frac", fractions.test},
          {"finite_sample_correction", finite_sample_correction},
          {"aux_split_fraction", aux_split_fraction},
          {"n_init", n_init},
          {"max_iter", max_iter},
          {"dataset", dataset_name}};
}

StageSeeds stage_seeds(std::uint64_t master) {
  return {derive_seed(master, "split"), derive_seed(master, "model"),
          derive_seed(master, "clustering"), derive_seed(master, "synthetic")};
}

PreparedRun prepare_run(const Dataset& raw, const RunConfig& cfg) {
  run_stage("config", [&] { cfg.validate(); });
  run_stage("data", [&] { raw.validate(); });
  const auto seeds = stage_seeds(cfg.seed);

  PreparedRun run;
  run.split = run_stage("split", [&] { return split(raw, cfg.fractions, seeds.split); });
  run_stage("standardize", [&] {
    run.feature_scaler = fit_standardizer(raw, run.split.train);
    run.data = raw;
    run.data.features = run.feature_scaler.apply(raw.features);
  });

  const Matrix x_train = select_rows(run.data.features, run.split.train);
  const Vector y_train = select_rows(run.data.targets, run.split.train);

  if (cfg.model == ModelKind::ridge) {
    run_stage("fit model", [&] {
      auto base = ridge_fit(x_train, y_train, cfg.ridge_lambda, cfg.sigma_floor);
      run.aux_rows = run.split.cal;
      if (cfg.aux_split_fraction > 0.0) {
        const auto n_cal = run.split.cal.size();
        const auto m = static_cast<std::size_t>(
            std::llround(cfg.aux_split_fraction * static_cast<double>(n_cal)));
        if (m < 1 || m >= n_cal) {
          throw ConfigError("aux split fraction leaves an empty residual or calibration subset");
        }
        run.aux_rows.assign(run.split.cal.begin(), run.split.cal.begin() + static_cast<std::ptrdiff_t>(m));
        run.split.cal.erase(run.split.cal.begin(), run.split.cal.begin() + static_cast<std::ptrdiff_t>(m));
      }
      run.model = std::make_shared<LinearRidgeModel>(
          ridge_fit_aux(base, select_rows(run.data.features, run.aux_rows),
                        select_rows(run.data.targets, run.aux_rows)));
    });
  } else {
    run_stage("fit model", [&] {
      ForestParams params = cfg.forest;
      params.seed = seeds.model;
      params.sigma_floor = cfg.sigma_floor;
      params.n_threads = cfg.threads;
      run.model = std::make_shared<ForestModel>(forest_fit(x_train, y_train, params));
    });
  }

  run_stage("calibration", [&] {
    const Matrix x_cal = select_rows(run.data.features, run.split.cal);
    run.mu_cal = run.model->predict(x_cal);
    run.sigma_cal = run.model->instability(x_cal);
    run.scores = calibration_scores(*run.model, run.data, run.split.cal);
    run.residuals_cal = select_rows(run.data.targets, run.split.cal) - run.mu_cal;
  });
  return run;
}

Localizer fit_localizer(const PreparedRun& run, std::size_t k, const RunConfig& cfg) {
  return run_stage("clustering", [&] {
    const Matrix x_cal = select_rows(run.data.features, run.split.cal);
    Localizer loc;
    loc.embedding = fit_embedding(x_cal, run.mu_cal, run.sigma_cal, cfg.lambda);
    const Matrix z = embed(x_cal, run.mu_cal, run.sigma_cal, loc.embedding);
    loc.clusters = kmeans(z, {k, stage_seeds(cfg.seed).clustering, cfg.n_init, cfg.max_iter});
    loc.support = std::make_shared<const CalibrationSupport>(run.scores.scores,
                                                             loc.clusters.assignments, k);
    return loc;
  });
}

std::vector<InstanceExplanation> explain_instances(const PreparedRun& run, const Localizer& loc,
                                                   const RunConfig& cfg) {
  return run_stage("localization", [&] {
    const auto settings = cfg.localization();
    settings.validate();
    std::vector<InstanceExplanation> out(run.split.test.size());
    parallel_for(out.size(), cfg.threads, [&](std::size_t i) {
      auto& ex = out[i];
      ex.test_row = run.split.test[i];
      const auto r = static_cast<Eigen::Index>(ex.test_row);
      const Vector x = run.data.features.row(r).transpose();
      ex.y_true = run.data.targets(r);
      ex.ref = run.model->reference(x);
      ex.ordering = order_clusters(loc.clusters, embed_one(x, ex.ref.mu, ex.ref.sigma, loc.embedding));
      ex.trajectory = greedy_trajectory(*loc.support, ex.ordering, settings, ex.ref);
      if (loc.support->k() >= 2) ex.cluster_effects = cluster_effects(*loc.support, settings, ex.ref);
      ex.global_interval = {ex.ref.mu, 0.5 * ex.trajectory.w0};
      ex.min_interval = {ex.ref.mu, 0.5 * ex.trajectory.w_min};
    });
    return out;
  });
}

std::vector<InstanceRecord> instance_records(const std::vector<InstanceExplanation>& ex) {
  std::vector<InstanceRecord> out;
  out.reserve(ex.size());
  for (const auto& e : ex) {
    out.push_back({e.ref.sigma, e.trajectory.w0, e.trajectory.w_red, e.trajectory.r_red});
  }
  return out;
}

std::vector<MethodRow> evaluate_methods(const PreparedRun& run, const RunConfig& cfg) {
  const Vector y_test = select_rows(run.data.targets, run.split.test);
  std::vector<MethodRow> rows;
  auto add = [&](std::string method, const std::vector<Interval>& iv, std::optional<double> rr) {
    const auto e = evaluate(iv, y_test);
    rows.push_back({std::move(method), cfg.dataset_name, cfg.alpha, cfg.k, e.mean_width, e.coverage, rr});
  };

  run_stage("normalized", [&] {
    add("normalized",
        normalized_cp(*run.model, run.data, run.split, cfg.alpha, cfg.finite_sample_correction),
        std::nullopt);
  });
  run_stage("mondrian", [&] {
    add("mondrian",
        mondrian_cp(*run.model, run.data, run.split, cfg.alpha, cfg.k,
                    stage_seeds(cfg.seed).clustering, cfg.lambda)
            .intervals,
        std::nullopt);
  });

  const auto loc = fit_localizer(run, cfg.k, cfg);
  const auto ex = explain_instances(run, loc, cfg);
  std::vector<Interval> global, minimal;
  double rr = 0.0;
  for (const auto& e : ex) {
    global.push_back(e.global_interval);
    minimal.push_back(e.min_interval);
    rr += e.trajectory.r_red;
  }
  add("decomp_global", global, std::nullopt);
  add("decomp_min", minimal, rr / static_cast<double>(ex.size()));
  return rows;
}

DiagnosticsSummary diagnose(const PreparedRun& run, const RunConfig& cfg) {
  DiagnosticsSummary s;
  s.dataset = cfg.dataset_name;
  s.model = to_string(cfg.model);
  for (const std::size_t k : {cfg.k, cfg.k2.value_or(8)}) {
    const auto loc = fit_localizer(run, k, cfg);
    const auto ex = explain_instances(run, loc, cfg);
    GranularityRow row;
    row.k = k;
    run_stage("diagnostics", [&] {
      const auto records = instance_records(ex);
      row.ria = ria(records);
      row.heterogeneity = heterogeneity(
          std::span<const double>(run.residuals_cal.data(), static_cast<std::size_t>(run.residuals_cal.size())),
          loc.clusters.assignments, k);
      for (const auto& r : records) row.mean_r_red += r.r_red;
      row.mean_r_red /= static_cast<double>(records.size());
    });
    s.per_k.push_back(row);
  }
  s.gs_ria_w = gs(s.per_k[0].ria.ria_w, s.per_k[1].ria.ria_w);
  s.gs_ria_r = gs(s.per_k[0].ria.ria_r, s.per_k[1].ria.ria_r);
  return s;
}

}  // namespace localcp
