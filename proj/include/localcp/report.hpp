#pragma once

#include <ostream>
#include <vector>

#include "json.hpp"
#include "localcp/pipeline.hpp"

namespace localcp {

inline constexpr int kReportSchemaVersion = 1;

/// Per-run explanation document: metadata plus one four-panel payload per
/// test instance. Layout is documented in docs/report-format.md.
nlohmann::json explanation_report(const RunConfig& cfg, const PreparedRun& run,
                                  const Localizer& loc,
                                  const std::vector<InstanceExplanation>& instances);

nlohmann::json instance_payload(const InstanceExplanation& ex, const Localizer& loc,
                                double eps_min);

/// Columns: method,dataset,alpha,K,mean_width,coverage,reducible_ratio
void write_methods_csv(std::ostream& out, const std::vector<MethodRow>& rows);

/// Columns: kind,dataset,model,K,RIA_W,RIA_R,heterogeneity
void write_diagnostics_csv(std::ostream& out, const DiagnosticsSummary& summary);

}  // namespace localcp
