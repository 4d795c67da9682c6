#include <fmt/format.h>

#include "localcp/error.hpp"
#include "localcp/models.hpp"

namespace localcp {

using nlohmann::json;

namespace {

constexpr const char* kFormatName = "localcp-model";

json fit_to_json(const LinearFit& fit) {
  return {{"coefficients", std::vector<double>(fit.coefficients.begin(), fit.coefficients.end())},
          {"intercept", fit.intercept}};
}

LinearFit fit_from_json(const json& j) {
  const auto coef = j.at("coefficients").get<std::vector<double>>();
  LinearFit fit;
  fit.coefficients = Eigen::Map<const Vector>(coef.data(), static_cast<Eigen::Index>(coef.size()));
  fit.intercept = j.at("intercept").get<double>();
  return fit;
}

json header(const char* kind) {
  return {{"format", kFormatName}, {"version", kModelFormatVersion}, {"kind", kind}};
}

}  // namespace

json LinearRidgeModel::to_json() const {
  json doc = header("ridge");
  doc["reg_strength"] = reg_strength_;
  doc["sigma_floor"] = sigma_floor_;
  doc["mean_model"] = fit_to_json(mean_fit_);
  doc["residual_model"] = residual_fit_ ? fit_to_json(*residual_fit_) : json(nullptr);
  return doc;
}

json ForestModel::to_json() const {
  json doc = header("forest");
  doc["input_dim"] = input_dim_;
  doc["sigma_floor"] = params_.sigma_floor;
  doc["params"] = {{"n_trees", trees_.size()},
                   {"max_depth", params_.max_depth ? json(*params_.max_depth) : json(nullptr)},
                   {"min_leaf", params_.min_leaf},
                   {"features_per_split", params_.features_per_split},
                   {"seed", params_.seed},
                   {"bootstrap", params_.bootstrap}};
  json trees = json::array();
  for (std::size_t t = 0; t < trees_.size(); ++t) {
    const auto& tr = trees_[t];
    trees.push_back({{"seed", tree_seeds_.empty() ? 0 : tree_seeds_[t]},
                     {"feature", tr.feature},
                     {"threshold", tr.threshold},
                     {"left", tr.left},
                     {"right", tr.right},
                     {"value", tr.value}});
  }
  doc["trees"] = std::move(trees);
  return doc;
}

std::unique_ptr<RegressionModel> model_from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kFormatName) {
      throw InputError("not a localcp model document");
    }
    const int version = doc.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw InputError(fmt::format("unsupported model format version {}", version));
    }
    const auto kind = doc.at("kind").get<std::string>();
    if (kind == "ridge") {
      std::optional<LinearFit> residual;
      if (!doc.at("residual_model").is_null()) residual = fit_from_json(doc["residual_model"]);
      return std::make_unique<LinearRidgeModel>(fit_from_json(doc.at("mean_model")),
                                                doc.at("reg_strength").get<double>(),
                                                doc.at("sigma_floor").get<double>(), residual);
    }
    if (kind == "forest") {
      const auto& p = doc.at("params");
      ForestParams params;
      if (!p.at("max_depth").is_null()) params.max_depth = p["max_depth"].get<std::size_t>();
      params.min_leaf = p.at("min_leaf").get<std::size_t>();
      params.features_per_split = p.at("features_per_split").get<std::size_t>();
      params.seed = p.at("seed").get<std::uint64_t>();
      params.bootstrap = p.at("bootstrap").get<bool>();
      params.sigma_floor = doc.at("sigma_floor").get<double>();
      const auto dim = doc.at("input_dim").get<std::size_t>();
      std::vector<RegressionTree> trees;
      std::vector<std::uint64_t> seeds;
      for (const auto& t : doc.at("trees")) {
        RegressionTree tr;
        tr.feature = t.at("feature").get<std::vector<int>>();
        tr.threshold = t.at("threshold").get<std::vector<double>>();
        tr.left = t.at("left").get<std::vector<int>>();
        tr.right = t.at("right").get<std::vector<int>>();
        tr.value = t.at("value").get<std::vector<double>>();
        const auto nodes = tr.feature.size();
        if (nodes == 0 || tr.threshold.size() != nodes || tr.left.size() != nodes ||
            tr.right.size() != nodes || tr.value.size() != nodes) {
          throw InputError("tree arrays have inconsistent lengths");
        }
        for (std::size_t i = 0; i < nodes; ++i) {
          if (tr.feature[i] < 0) continue;
          const auto in_range = [&](int c) {
            return c > static_cast<int>(i) && c < static_cast<int>(nodes);
          };
          if (tr.feature[i] >= static_cast<int>(dim) || !in_range(tr.left[i]) ||
              !in_range(tr.right[i])) {
            throw InputError(fmt::format("tree node {} has an invalid split", i));
          }
        }
        seeds.push_back(t.at("seed").get<std::uint64_t>());
        trees.push_back(std::move(tr));
      }
      return std::make_unique<ForestModel>(std::move(trees), std::move(seeds), dim, params);
    }
    throw InputError(fmt::format("unknown model kind '{}'", kind));
  } catch (const json::exception& e) {
    throw InputError(fmt::format("malformed model document: {}", e.what()));
  }
}

}  // namespace localcp
