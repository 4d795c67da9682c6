#include <numeric>

#include "localcp/conformal.hpp"
#include "localcp/error.hpp"
#include "localcp/localize.hpp"

namespace localcp {

MondrianResult mondrian_cp(const RegressionModel& model, const Dataset& ds,
                           const DataSplit& split, double alpha, std::size_t k,
                           std::uint64_t seed, const EmbeddingWeights& lambda,
                           std::size_t min_stratum_size) {
  if (k < 1) throw ConfigError("Mondrian needs K >= 1");
  const Matrix x_cal = select_rows(ds.features, split.cal);
  const Vector mu_cal = model.predict(x_cal);
  const Vector sigma_cal = model.instability(x_cal);
  const auto cal = calibration_scores(model, ds, split.cal);

  const auto spec = fit_embedding(x_cal, mu_cal, sigma_cal, lambda);
  const auto clusters = kmeans(embed(x_cal, mu_cal, sigma_cal, spec), {k, seed, 10, 300});

  MondrianResult out;
  out.model = fit_mondrian(cal.scores, clusters.assignments, k, alpha, min_stratum_size);
  out.intervals.reserve(split.test.size());
  out.test_strata.reserve(split.test.size());
  for (const auto r : split.test) {
    const Vector x = ds.features.row(static_cast<Eigen::Index>(r)).transpose();
    const auto ref = model.reference(x);
    const int stratum = clusters.nearest(embed_one(x, ref.mu, ref.sigma, spec));
    out.test_strata.push_back(stratum);
    out.intervals.push_back(
        conformal_interval(ref.mu, ref.sigma, out.model.stratum_quantile[static_cast<std::size_t>(stratum)]));
  }
  return out;
}

}  // namespace localcp
