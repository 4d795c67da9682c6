// Command-line front end: synth, explain, evaluate, diagnose.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "localcp/data.hpp"
#include "localcp/error.hpp"
#include "localcp/pipeline.hpp"
#include "localcp/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;

// Flags as given on the command line; unset flags fall back to the config
// file, then to RunConfig defaults.
struct Flags {
  std::optional<std::string> config_file;
  std::optional<std::string> data;
  std::optional<std::size_t> synth_n;
  std::optional<std::string> target;
  std::optional<std::string> model;
  std::optional<double> alpha;
  std::optional<std::size_t> k;
  std::optional<std::size_t> k2;
  std::optional<double> eps;
  std::optional<double> lambda_x;
  std::optional<double> lambda_mu;
  std::optional<double> lambda_sigma;
  std::optional<std::size_t> trees;
  std::optional<std::size_t> max_depth;
  std::optional<std::size_t> min_leaf;
  std::optional<std::size_t> features_per_split;
  std::optional<double> ridge_lambda;
  std::optional<double> sigma_floor;
  std::optional<std::uint64_t> seed;
  std::optional<double> train_frac;
  std::optional<double> cal_frac;
  std::optional<double> test_frac;
  std::optional<bool> finite_sample_correction;
  std::optional<double> aux_split_fraction;
  std::optional<std::size_t> n_init;
  std::optional<std::size_t> max_iter;
  std::optional<std::size_t> threads;
  std::optional<double> base;
  std::optional<double> slope;
  std::optional<double> x_lo;
  std::optional<double> x_hi;
  std::optional<std::string> out;
};

template <typename T>
void pick(std::optional<T>& flag, const json& file, const char* key) {
  if (flag || !file.contains(key) || file[key].is_null()) return;
  flag = file[key].get<T>();
}

// Fills unset flags from the JSON config file (keys use underscores).
void merge_config_file(Flags& f) {
  if (!f.config_file) return;
  std::ifstream in(*f.config_file);
  if (!in) throw localcp::ConfigError("cannot open config file '" + *f.config_file + "'");
  json file;
  try {
    file = json::parse(in);
    pick(f.data, file, "data");
    pick(f.synth_n, file, "synth_n");
    pick(f.target, file, "target");
    pick(f.model, file, "model");
    pick(f.alpha, file, "alpha");
    pick(f.k, file, "k");
    pick(f.k2, file, "k2");
    pick(f.eps, file, "eps");
    pick(f.lambda_x, file, "lambda_x");
    pick(f.lambda_mu, file, "lambda_mu");
    pick(f.lambda_sigma, file, "lambda_sigma");
    pick(f.trees, file, "trees");
    pick(f.max_depth, file, "max_depth");
    pick(f.min_leaf, file, "min_leaf");
    pick(f.features_per_split, file, "features_per_split");
    pick(f.ridge_lambda, file, "ridge_lambda");
    pick(f.sigma_floor, file, "sigma_floor");
    pick(f.seed, file, "seed");
    pick(f.train_frac, file, "train_frac");
    pick(f.cal_frac, file, "cal_frac");
    pick(f.test_frac, file, "test_frac");
    pick(f.finite_sample_correction, file, "finite_sample_correction");
    pick(f.aux_split_fraction, file, "aux_split_fraction");
    pick(f.n_init, file, "n_init");
    pick(f.max_iter, file, "max_iter");
    pick(f.threads, file, "threads");
    pick(f.base, file, "base");
    pick(f.slope, file, "slope");
    pick(f.x_lo, file, "x_lo");
    pick(f.x_hi, file, "x_hi");
    pick(f.out, file, "out");
  } catch (const json::exception& e) {
    throw localcp::ConfigError("config file '" + *f.config_file + "': " + e.what());
  }
}

localcp::SyntheticConfig synthetic_config(const Flags& f, std::size_t n, std::uint64_t seed) {
  localcp::SyntheticConfig sc;
  sc.n = n;
  sc.seed = seed;
  if (f.base) sc.base = *f.base;
  if (f.slope) sc.slope = *f.slope;
  if (f.x_lo) sc.x_lo = *f.x_lo;
  if (f.x_hi) sc.x_hi = *f.x_hi;
  sc.validate();
  return sc;
}

localcp::RunConfig run_config(const Flags& f) {
  if (!f.seed) throw localcp::ConfigError("--seed is required");
  localcp::RunConfig c;
  c.seed = *f.seed;
  if (f.model) c.model = localcp::parse_model_kind(*f.model);
  if (f.alpha) c.alpha = *f.alpha;
  if (f.k) c.k = *f.k;
  c.k2 = f.k2;
  if (f.eps) c.eps_min = *f.eps;
  if (f.lambda_x) c.lambda.x = *f.lambda_x;
  if (f.lambda_mu) c.lambda.mu = *f.lambda_mu;
  if (f.lambda_sigma) c.lambda.sigma = *f.lambda_sigma;
  if (f.trees) c.forest.n_trees = *f.trees;
  c.forest.max_depth = f.max_depth;
  if (f.min_leaf) c.forest.min_leaf = *f.min_leaf;
  if (f.features_per_split) c.forest.features_per_split = *f.features_per_split;
  if (f.ridge_lambda) c.ridge_lambda = *f.ridge_lambda;
  if (f.sigma_floor) c.sigma_floor = *f.sigma_floor;
  if (f.train_frac) c.fractions.train = *f.train_frac;
  if (f.cal_frac) c.fractions.cal = *f.cal_frac;
  if (f.test_frac) c.fractions.test = *f.test_frac;
  if (f.finite_sample_correction) c.finite_sample_correction = *f.finite_sample_correction;
  if (f.aux_split_fraction) c.aux_split_fraction = *f.aux_split_fraction;
  if (f.n_init) c.n_init = *f.n_init;
  if (f.max_iter) c.max_iter = *f.max_iter;
  if (f.threads) c.threads = *f.threads;
  c.validate();
  return c;
}

localcp::Dataset load_data(const Flags& f, localcp::RunConfig& cfg) {
  if (f.data && f.synth_n) throw localcp::ConfigError("use either --data or --synth-n, not both");
  if (f.data) {
    cfg.dataset_name = fs::path(*f.data).stem().string();
    return localcp::run_stage("load data", [&] {
      return localcp::load_csv(*f.data, f.target.value_or("y"));
    });
  }
  if (f.synth_n) {
    cfg.dataset_name = "synthetic";
    const auto sc = synthetic_config(f, *f.synth_n, localcp::stage_seeds(cfg.seed).synthetic);
    return localcp::generate_synthetic(sc);
  }
  throw localcp::ConfigError("one of --data or --synth-n is required");
}

fs::path require_out(const Flags& f) {
  if (!f.out) throw localcp::ConfigError("--out is required");
  const fs::path p(*f.out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw localcp::StageError("write output", "cannot open '" + p.string() + "'");
  return out;
}

void cmd_synth(const Flags& f) {
  if (!f.seed) throw localcp::ConfigError("--seed is required");
  const auto n = f.synth_n.value_or(5000);
  if (n == 0) throw localcp::ConfigError("--n must be >= 1");
  const auto sc = synthetic_config(f, n, *f.seed);
  const auto path = require_out(f);
  localcp::write_csv(path, localcp::generate_synthetic(sc), "y");
  json meta = {{"generator", "heteroscedastic-sine"},
               {"tool_version", localcp::kToolVersion},
               {"n", sc.n},
               {"seed", sc.seed},
               {"base", sc.base},
               {"slope", sc.slope},
               {"x_lo", sc.x_lo},
               {"x_hi", sc.x_hi},
               {"columns", {"x", "y"}}};
  auto meta_out = open_out(path.string() + ".meta.json");
  meta_out << meta.dump(2) << '\n';
}

void cmd_explain(const Flags& f) {
  auto cfg = run_config(f);
  const auto path = require_out(f);
  const auto raw = load_data(f, cfg);
  const auto run = localcp::prepare_run(raw, cfg);
  const auto loc = localcp::fit_localizer(run, cfg.k, cfg);
  const auto ex = localcp::explain_instances(run, loc, cfg);
  auto out = open_out(path);
  out << localcp::explanation_report(cfg, run, loc, ex).dump(2) << '\n';
}

void cmd_evaluate(const Flags& f) {
  auto cfg = run_config(f);
  const auto path = require_out(f);
  const auto raw = load_data(f, cfg);
  const auto run = localcp::prepare_run(raw, cfg);
  const auto rows = localcp::evaluate_methods(run, cfg);
  auto out = open_out(path);
  localcp::write_methods_csv(out, rows);
}

void cmd_diagnose(const Flags& f) {
  auto cfg = run_config(f);
  const auto path = require_out(f);
  const auto raw = load_data(f, cfg);
  const auto run = localcp::prepare_run(raw, cfg);
  const auto summary = localcp::diagnose(run, cfg);
  auto out = open_out(path);
  localcp::write_diagnostics_csv(out, summary);
}

void add_shared(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config_file, "JSON config file; flags override its keys");
  sub->add_option("--data", f.data, "Input CSV (header row, numeric cells)");
  sub->add_option("--synth-n", f.synth_n, "Use the synthetic generator with this many rows");
  sub->add_option("--target", f.target, "Target column name (default y)");
  sub->add_option("--model", f.model, "Base model: ridge or forest (default forest)");
  sub->add_option("--alpha", f.alpha, "Miscoverage level (default 0.10)");
  sub->add_option("--k", f.k, "Number of calibration clusters (default 5)");
  sub->add_option("--k2", f.k2, "Second granularity for diagnose (default 8)");
  sub->add_option("--eps", f.eps, "Minimum calibration weight (default 1e-3)");
  sub->add_option("--lambda-x", f.lambda_x, "Embedding weight of features (default 1)");
  sub->add_option("--lambda-mu", f.lambda_mu, "Embedding weight of predictions (default 1)");
  sub->add_option("--lambda-sigma", f.lambda_sigma, "Embedding weight of instability (default 1)");
  sub->add_option("--trees", f.trees, "Forest size (default 500)");
  sub->add_option("--max-depth", f.max_depth, "Forest max depth (default unlimited)");
  sub->add_option("--min-leaf", f.min_leaf, "Forest min samples per leaf (default 2)");
  sub->add_option("--features-per-split", f.features_per_split,
                  "Forest features tried per split (default max(1, d/3))");
  sub->add_option("--ridge-lambda", f.ridge_lambda, "Ridge regularisation (default 1)");
  sub->add_option("--sigma-floor", f.sigma_floor, "Instability floor (default 1e-6)");
  sub->add_option("--seed", f.seed, "Master seed (required)");
  sub->add_option("--train-frac", f.train_frac, "Training fraction (default 0.6)");
  sub->add_option("--cal-frac", f.cal_frac, "Calibration fraction (default 0.2)");
  sub->add_option("--test-frac", f.test_frac, "Test fraction (default 0.2)");
  sub->add_option("--finite-sample-correction", f.finite_sample_correction,
                  "Use the ceil((n+1)(1-alpha))/n quantile level (default false)");
  sub->add_option("--aux-split-fraction", f.aux_split_fraction,
                  "Calibration share reserved for the ridge residual model (default 0)");
  sub->add_option("--n-init", f.n_init, "k-means restarts (default 10)");
  sub->add_option("--max-iter", f.max_iter, "k-means iteration cap (default 300)");
  sub->add_option("--threads", f.threads, "Worker threads (default 1)");
  sub->add_option("--base", f.base, "Synthetic noise base (default 0.35)");
  sub->add_option("--slope", f.slope, "Synthetic noise slope (default 0.28)");
  sub->add_option("--x-lo", f.x_lo, "Synthetic x lower bound (default 0)");
  sub->add_option("--x-hi", f.x_hi, "Synthetic x upper bound (default 10)");
  sub->add_option("--out", f.out, "Output file");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Localised split-conformal uncertainty decomposition"};
  app.require_subcommand(1);
  Flags flags;

  auto* synth = app.add_subcommand("synth", "Write a heteroscedastic synthetic dataset (x,y CSV)");
  synth->add_option("--n", flags.synth_n, "Rows (default 5000)");
  synth->add_option("--seed", flags.seed, "Seed (required)");
  synth->add_option("--base", flags.base, "Noise base (default 0.35)");
  synth->add_option("--slope", flags.slope, "Noise slope (default 0.28)");
  synth->add_option("--x-lo", flags.x_lo, "x lower bound (default 0)");
  synth->add_option("--x-hi", flags.x_hi, "x upper bound (default 10)");
  synth->add_option("--out", flags.out, "Output CSV");
  synth->add_option("--config", flags.config_file, "JSON config file");

  auto* explain = app.add_subcommand("explain", "Per-instance localisation report (JSON)");
  auto* evaluate = app.add_subcommand("evaluate", "Method comparison table (CSV)");
  auto* diagnose = app.add_subcommand("diagnose", "RIA / GS / heterogeneity table (CSV)");
  for (auto* sub : {explain, evaluate, diagnose}) add_shared(sub, flags);

  CLI11_PARSE(app, argc, argv);

  try {
    merge_config_file(flags);
    if (synth->parsed()) cmd_synth(flags);
    if (explain->parsed()) cmd_explain(flags);
    if (evaluate->parsed()) cmd_evaluate(flags);
    if (diagnose->parsed()) cmd_diagnose(flags);
  } catch (const localcp::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const localcp::StageError& e) {
    std::cerr << "error in " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return 0;
}
