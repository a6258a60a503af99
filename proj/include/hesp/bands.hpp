#pragma once

#include "hesp/estimate.hpp"
#include "hesp/panel.hpp"
#include "hesp/spline.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hesp {

enum class Side { Sup, Inf };
enum class CritMethod { ParamBoot, MultBoot, KacRice };
enum class KacRiceForm { Corrected, Printed };
enum class BandKind { Pointwise, Bonferroni, ScbSup, ScbInfTwoSided, ScbInfPlus, ScbInfMinus };

[[nodiscard]] std::string to_string(Side side);
[[nodiscard]] std::string to_string(CritMethod method);
[[nodiscard]] std::string to_string(KacRiceForm form);
[[nodiscard]] std::string to_string(BandKind kind);
[[nodiscard]] Side parse_side(const std::string& s);
[[nodiscard]] CritMethod parse_method(const std::string& s);
[[nodiscard]] KacRiceForm parse_kac_rice_form(const std::string& s);
[[nodiscard]] BandKind parse_band_kind(const std::string& s);

inline constexpr std::size_t kDefaultPostGrid = 100;
inline constexpr std::size_t kDefaultPreGrid = 101;
inline constexpr std::size_t kDefaultReplicates = 1000;

/// Time interval for a band or critical value. An open lower end drops lo
/// from the evaluation grid, as for the post-treatment span (0, T_post].
struct Domain {
    double lo = 0.0;
    double hi = 0.0;
    bool open_lo = false;

    bool operator==(const Domain&) const = default;
};

/// m equidistant points: lo + k (hi - lo) / m for k = 1..m when open at lo,
/// otherwise linspace(lo, hi, m).
[[nodiscard]] std::vector<double> make_grid(const Domain& domain, std::size_t m);

[[nodiscard]] Domain post_domain(double t_post);
[[nodiscard]] Domain pre_domain(double t_pre, double t_a);

struct CritConfig {
    Side side = Side::Sup;
    double alpha = 0.05;
    Domain domain;
    std::size_t grid_size = kDefaultPostGrid;
    std::size_t B = kDefaultReplicates;
    std::uint64_t seed = 1;
    KacRiceForm kac_rice_form = KacRiceForm::Corrected;
};

struct CriticalValue {
    double value = 0.0;
    Side side = Side::Sup;
    double alpha = 0.05;
    CritMethod method = CritMethod::ParamBoot;
    Domain domain;
    std::size_t B = 0;
    std::uint64_t seed = 0;
    std::size_t grid_size = 0;
    double df = 0.0;
    double roughness = 0.0;                 // Kac-Rice integral (1/2pi) int |tau|
    double clipped_fraction = 0.0;          // PSD repair: clipped eigen mass / trace
    std::string warning;
};

/// Knot indices from the largest time <= lo to the smallest time >= hi.
[[nodiscard]] std::vector<std::size_t> covering_knots(const std::vector<double>& times, const Domain& domain);

/// Symmetric square root factor F with F F' = C after clipping negative
/// eigenvalues. Returns the clipped eigen mass relative to the trace.
struct PsdFactor {
    Eigen::MatrixXd factor;
    double clipped_fraction = 0.0;
};
[[nodiscard]] PsdFactor psd_factor(const Eigen::MatrixXd& c);

[[nodiscard]] CriticalValue crit_param_boot(const PointwiseEstimate& est, const CovMatrix& cov, const CritConfig& cfg);

[[nodiscard]] CriticalValue crit_mult_boot(const DemeanedPanel& dp, const PointwiseEstimate& est,
                                           const CovMatrix& cov, const CritConfig& cfg);

/// Kac-Rice critical value on a fitted surface; df = +inf selects the
/// Gaussian tail.
[[nodiscard]] CriticalValue crit_kac_rice(const CovSurface& surface, const CritConfig& cfg, double df);

/// Kac-Rice on the tensor spline of the observed covariance restricted to
/// the knots covering the domain.
[[nodiscard]] CriticalValue crit_kac_rice(const CovMatrix& cov, const CritConfig& cfg);

/// Root of F(-u; df) + K g(u; df) = target by bisection on [0, 50].
[[nodiscard]] double kac_rice_solve(double roughness, double alpha, double df, KacRiceForm form);

/// Two-point multiplier distribution.
struct Multiplier {
    double low;
    double high;
    double p_low;
};
[[nodiscard]] Multiplier mammen_multiplier() noexcept;

struct Band {
    std::vector<double> grid;
    std::vector<double> estimate;
    std::vector<double> lower;
    std::vector<double> upper;
    BandKind kind = BandKind::Pointwise;
    double alpha = 0.05;
    double df = 0.0;
    std::optional<CritMethod> method;
    double crit = 0.0;
    std::uint64_t seed = 0;
};

/// Spline of the estimate and tensor spline of the covariance over all knots.
struct FittedCurves {
    SplineCurve beta;
    CovSurface cov;
    std::size_t n = 0;
};
[[nodiscard]] FittedCurves fit_curves(const PointwiseEstimate& est, const CovMatrix& cov);

[[nodiscard]] Band pointwise_band(const SplineCurve& beta, const CovSurface& cov, const std::vector<double>& grid,
                                  double alpha, std::size_t n);

/// Pointwise band at level alpha / m; m defaults to the grid size.
[[nodiscard]] Band bonferroni_band(const SplineCurve& beta, const CovSurface& cov, const std::vector<double>& grid,
                                   double alpha, std::size_t n, std::size_t m = 0);

/// beta(t) +- u se(t). Sup critical values give scb-sup; inf critical values
/// give the two-sided band unless a one-sided kind is requested.
[[nodiscard]] Band build_band(const SplineCurve& beta, const CovSurface& cov, const CriticalValue& crit,
                              const std::vector<double>& grid, std::size_t n,
                              std::optional<BandKind> kind = std::nullopt);

}  // namespace hesp
