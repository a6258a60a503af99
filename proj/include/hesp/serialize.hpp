#pragma once

#include "hesp/bands.hpp"
#include "hesp/estimate.hpp"
#include "hesp/honest.hpp"
#include "hesp/sim.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace hesp {

using Json = nlohmann::ordered_json;

/// Finite reals as numbers, infinities and NaN as null.
[[nodiscard]] Json json_real(double x);
[[nodiscard]] Json json_reals(const std::vector<double>& xs);
[[nodiscard]] Json json_reals(const Eigen::VectorXd& xs);

[[nodiscard]] Json to_json(const PointwiseEstimate& est);
[[nodiscard]] Json to_json(const CovMatrix& cov);
[[nodiscard]] Json to_json(const Domain& domain);
[[nodiscard]] Json to_json(const CriticalValue& crit);
[[nodiscard]] Json to_json(const Band& band);
[[nodiscard]] Json to_json(const ReferenceBand& ref);
[[nodiscard]] Json to_json(const TestResult& test);
[[nodiscard]] Json to_json(const StaggeredSpec& spec);

/// {"estimate", "covariance"} for a basic or covariate-adjusted panel.
[[nodiscard]] Json estimate_json(const PointwiseEstimate& est, const CovMatrix& cov);
/// Aggregate plus per-group estimates for a staggered panel.
[[nodiscard]] Json staggered_json(const StaggeredSpec& spec, const StaggeredResult& result);

[[nodiscard]] Json report_json(const HonestEventStudy& report);

/// One row per point of refband_grid: t, estimate, every band envelope, the
/// reference band and the significance / violation flags. Cells outside a
/// band's grid are empty.
[[nodiscard]] std::string plot_csv(const HonestEventStudy& report);

[[nodiscard]] Json accuracy_json(const std::vector<AccuracyCell>& cells);
[[nodiscard]] std::string accuracy_csv(const std::vector<AccuracyCell>& cells);
[[nodiscard]] Json power_json(const PowerCurve& curve);
[[nodiscard]] std::string power_csv(const PowerCurve& curve);

/// Reads the optional fields of a /test style request over defaults.
[[nodiscard]] ReportConfig report_config_from_json(const Json& j, ReportConfig base = {});
[[nodiscard]] RefBandConfig refband_config_from_json(const Json& j, RefBandConfig base = {});

/// Pretty-printed with a trailing newline.
[[nodiscard]] std::string dump(const Json& j);

}  // namespace hesp
