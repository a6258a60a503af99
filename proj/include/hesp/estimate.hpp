#pragma once

#include "hesp/panel.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

namespace hesp {

enum class EstimatorKind { Basic, Fwl, StaggeredGroup, StaggeredAggregate };

[[nodiscard]] std::string to_string(EstimatorKind kind);

/// DiD estimates at the observed event times; beta is exactly 0 at ref.
struct PointwiseEstimate {
    std::vector<double> times;
    Eigen::VectorXd beta;
    std::size_t ref = 0;
    std::size_t n_units = 0;
    EstimatorKind kind = EstimatorKind::Basic;
    double group = 0.0;                     // reference period for StaggeredGroup
};

/// Covariance of the scaled estimator, n * Cov(beta_hat(s), beta_hat(t)).
struct CovMatrix {
    std::vector<double> times;
    Eigen::MatrixXd cov;
    std::size_t n_units = 0;
};

[[nodiscard]] PointwiseEstimate did_estimate(const DemeanedPanel& dp);
[[nodiscard]] CovMatrix did_covariance(const DemeanedPanel& dp, const PointwiseEstimate& est);

/// Residuals (Y_i(t) - Y_i(0)) - beta(t) D_i on the demeaned scale, n x T.
[[nodiscard]] Eigen::MatrixXd did_residuals(const DemeanedPanel& dp, const PointwiseEstimate& est);

/// Partials the demeaned covariates out of the demeaned treatment and outcomes.
/// The returned panel holds the residualized series in d_dot / y_dot.
[[nodiscard]] DemeanedPanel fwl_residualize(const PanelData& data);

/// Above this unit count the projector is applied through a QR factor
/// instead of being formed explicitly.
inline constexpr std::size_t kFwlExplicitLimit = 2000;
[[nodiscard]] DemeanedPanel fwl_residualize(const PanelData& data, std::size_t explicit_limit);

struct StaggeredSpec {
    std::vector<double> groups;             // finite reference periods, ascending
    std::vector<std::size_t> sizes;         // n_g
    std::vector<double> weights;            // n_g / n_G
    double window_lo = 0.0;                 // -T_pre,A
    double window_hi = 0.0;                 // T_post,A
};

/// Groups, sizes, weights and common window implied by a staggered panel.
[[nodiscard]] StaggeredSpec staggered_spec(const PanelData& data);

struct StaggeredResult {
    std::vector<PointwiseEstimate> group_estimates;
    std::vector<CovMatrix> group_covariances;
    PointwiseEstimate aggregate;
    CovMatrix aggregate_cov;
};

[[nodiscard]] StaggeredResult staggered_estimate(const PanelData& data, const StaggeredSpec& spec);

/// Event-study coefficients from a dense least-squares fit of two-way
/// demeaned outcomes on treatment-by-period dummies.
[[nodiscard]] PointwiseEstimate twfe_oracle(const PanelData& data);

/// Estimate plus covariance for a basic or covariate-adjusted panel.
struct EstimateBundle {
    DemeanedPanel dp;
    PointwiseEstimate est;
    CovMatrix cov;
};

[[nodiscard]] EstimateBundle estimate_panel(const PanelData& data);

}  // namespace hesp
