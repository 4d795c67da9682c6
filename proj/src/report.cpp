#include "localcp/report.hpp"

#include <fmt/format.h>

namespace localcp {

using nlohmann::json;

namespace {

json interval_json(const Interval& iv) { return {{"lo", iv.lo()}, {"hi", iv.hi()}}; }

std::string num(double v) { return fmt::format("{:.17g}", v); }

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string("NA"); }

}  // namespace

json instance_payload(const InstanceExplanation& ex, const Localizer& loc, double eps_min) {
  const auto& t = ex.trajectory;
  const auto k = loc.support->k();

  json path = json::array();
  json weights = json::array();
  for (const auto& st : t.steps) {
    path.push_back({{"step", st.step},
                    {"width", st.width_current},
                    {"candidate_width", st.width_candidate},
                    {"accepted", st.accepted}});
    std::vector<double> row(k, eps_min);
    for (int c : st.active_clusters) row[static_cast<std::size_t>(c)] = 1.0;
    weights.push_back(row);
  }
  std::vector<int> clusters(k);
  for (std::size_t c = 0; c < k; ++c) clusters[c] = static_cast<int>(c);

  return {{"test_id", ex.test_row},
          {"mu_star", ex.ref.mu},
          {"sigma_star", ex.ref.sigma},
          {"y_true", ex.y_true},
          {"global_interval", interval_json(ex.global_interval)},
          {"min_interval", interval_json(ex.min_interval)},
          {"relevance_order", ex.ordering.order},
          {"cluster_distances", ex.ordering.distances},
          {"trajectory", std::move(path)},
          {"delta_w", t.delta_w},
          {"reduction",
           {{"W0", t.w0},
            {"Wmin", t.w_min},
            {"W_red", t.w_red},
            {"R_red", t.r_red},
            {"degenerate", t.degenerate}}},
          {"support", {{"clusters", clusters}, {"weights", std::move(weights)}}},
          {"cluster_effects", ex.cluster_effects}};
}

json explanation_report(const RunConfig& cfg, const PreparedRun& run, const Localizer& loc,
                        const std::vector<InstanceExplanation>& instances) {
  std::vector<std::size_t> sizes(loc.clusters.k, 0);
  for (int a : loc.clusters.assignments) ++sizes[static_cast<std::size_t>(a)];

  json doc;
  doc["schema"] = "localcp-explanation-report";
  doc["schema_version"] = kReportSchemaVersion;
  doc["metadata"] = {{"tool_version", kToolVersion},
                     {"seed", cfg.seed},
                     {"config", cfg.to_json()},
                     {"n_train", run.split.train.size()},
                     {"n_cal", run.split.cal.size()},
                     {"n_test", run.split.test.size()},
                     {"features", run.data.feature_names}};
  doc["clusters"] = {{"K", loc.clusters.k}, {"sizes", sizes}, {"inertia", loc.clusters.inertia}};
  json items = json::array();
  for (const auto& ex : instances) items.push_back(instance_payload(ex, loc, cfg.eps_min));
  doc["instances"] = std::move(items);
  return doc;
}

void write_methods_csv(std::ostream& out, const std::vector<MethodRow>& rows) {
  out << "method,dataset,alpha,K,mean_width,coverage,reducible_ratio\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.dataset << ',' << num(r.alpha) << ',' << r.k << ','
        << num(r.mean_width) << ',' << num(r.coverage) << ','
        << (r.reducible_ratio ? num(*r.reducible_ratio) : std::string()) << '\n';
  }
}

void write_diagnostics_csv(std::ostream& out, const DiagnosticsSummary& s) {
  out << "kind,dataset,model,K,RIA_W,RIA_R,heterogeneity\n";
  for (const auto& row : s.per_k) {
    out << "ria," << s.dataset << ',' << s.model << ',' << row.k << ',' << num(row.ria.ria_w) << ','
        << num(row.ria.ria_r) << ',' << num(row.heterogeneity) << '\n';
  }
  if (s.per_k.size() == 2) {
    out << "gs," << s.dataset << ',' << s.model << ',' << s.per_k[0].k << ':' << s.per_k[1].k
        << ',' << num(s.gs_ria_w) << ',' << num(s.gs_ria_r) << ",\n";
  }
}

}  // namespace localcp
