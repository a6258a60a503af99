#pragma once

#include "hesp/bands.hpp"
#include "hesp/honest.hpp"
#include "hesp/panel.hpp"
#include "hesp/spline.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hesp {

enum class AttKind { Att1, Att2, Att1Star, Att2Star };
enum class CovKind { Cov1, Cov2 };

[[nodiscard]] std::string to_string(AttKind kind);
[[nodiscard]] std::string to_string(CovKind kind);
[[nodiscard]] AttKind parse_att(const std::string& s);
[[nodiscard]] CovKind parse_cov(const std::string& s);

/// Matérn covariance with h = |s - t| / 10. The nu = 3/2 case uses its
/// closed form; everything else goes through the Bessel function.
[[nodiscard]] double matern_cov(double s, double t, double sigma2, double nu);
/// Bessel-function evaluation for any nu, bypassing the closed forms.
[[nodiscard]] double matern_generic(double h, double sigma2, double nu);

/// Default process variance of the error kernels. Both kernels use 4 (scale 2),
/// the value under which the published accuracy table is reproduced.
[[nodiscard]] double cov_sigma2(CovKind kind) noexcept;
[[nodiscard]] double cov_nu(CovKind kind) noexcept;

/// Gaussian process sampler on a fixed grid via a jittered Cholesky factor.
class GpSampler {
public:
    GpSampler(const std::vector<double>& grid, const std::function<double(double, double)>& cov);

    /// n paths, one per row; path i depends only on (seed, i).
    [[nodiscard]] Eigen::MatrixXd sample(std::size_t n, std::uint64_t seed) const;
    /// One path from an explicit stream.
    [[nodiscard]] Eigen::VectorXd path(std::uint64_t seed, std::uint64_t stream) const;
    [[nodiscard]] const Eigen::MatrixXd& factor() const noexcept { return l_; }

private:
    Eigen::MatrixXd l_;
};

[[nodiscard]] Eigen::MatrixXd sample_gp(const std::vector<double>& grid,
                                        const std::function<double(double, double)>& cov, std::size_t n,
                                        std::uint64_t seed);

/// Treatment-effect curves. ATT1/ATT2 are scaled by a and vanish outside
/// (0, t_post]; the anticipation variants ATT1*/ATT2* start at -4 and are
/// not scaled.
[[nodiscard]] double att_curve(AttKind kind, double a, double t, double t_post = 10.0);
[[nodiscard]] double phi(double t);
[[nodiscard]] double pi_select(double lambda);

struct SimConfig {
    std::size_t n = 100;
    std::size_t T = 11;
    double t_pre = 10.0;
    double t_post = 10.0;
    AttKind att = AttKind::Att1;
    double a = 1.0;
    double dt_slope = 0.0;                  // differential trend Delta_DT(t) = slope * t
    CovKind cov = CovKind::Cov1;
    std::optional<double> sigma2;           // overrides cov_sigma2(cov)
    std::size_t reps = 500;
    std::uint64_t seed = 1;

    void validate() const;
    [[nodiscard]] std::vector<double> grid() const;
    [[nodiscard]] double noise_variance() const { return sigma2.value_or(cov_sigma2(cov)); }
    [[nodiscard]] bool anticipation() const noexcept { return att == AttKind::Att1Star || att == AttKind::Att2Star; }
    [[nodiscard]] double t_a() const noexcept { return anticipation() ? -4.0 : 0.0; }
};

/// True DiD parameter beta(t) = ATT(t) - Delta_TA + Delta_DT(t).
[[nodiscard]] double true_beta(const SimConfig& cfg, double t);

struct SimPanel {
    PanelData data;
    std::function<double(double)> truth;
};

/// One simulated panel; reuses a sampler built for cfg's grid and kernel.
[[nodiscard]] SimPanel generate_panel(const SimConfig& cfg, std::uint64_t seed, const GpSampler& sampler);
[[nodiscard]] SimPanel generate_panel(const SimConfig& cfg, std::uint64_t seed);

[[nodiscard]] GpSampler make_sampler(const SimConfig& cfg);

/// Max abs deviation over 101 equidistant points spanning the spline domain.
[[nodiscard]] double metric_q(const SplineCurve& est, const std::function<double(double)>& truth);

struct AccuracyCell {
    SimConfig config;
    double mean = 0.0;
    double sd = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
};

[[nodiscard]] AccuracyCell run_accuracy_cell(const SimConfig& cfg);
[[nodiscard]] std::vector<AccuracyCell> run_accuracy_study(const std::vector<SimConfig>& cells);

/// Band labels used by the power and validation studies.
enum class StudyBand { ScbPb, ScbMb, ScbKr, Naive, Bonferroni };
[[nodiscard]] std::string to_string(StudyBand band);
[[nodiscard]] StudyBand parse_study_band(const std::string& s);

struct PowerCurve {
    std::string study;                      // "power" or "validation"
    std::string effect_name;                // "a" or "S"
    std::vector<double> effects;
    std::vector<StudyBand> bands;
    std::vector<std::vector<double>> rates; // rates[band][effect]
    std::vector<std::vector<double>> se;
    std::size_t reps = 0;
    double alpha = 0.05;
    std::vector<std::string> notes;
};

enum class PowerReference { Trend, Zero };

struct PowerStudyConfig {
    SimConfig base;                         // base.a is replaced by each effect
    std::vector<double> effects = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<StudyBand> bands = {StudyBand::ScbPb, StudyBand::ScbMb, StudyBand::ScbKr, StudyBand::Naive,
                                    StudyBand::Bonferroni};
    PowerReference reference = PowerReference::Trend;
    double m = 0.5;                         // M_l = M_u for the trend reference band
    double alpha = 0.05;
    std::size_t B = kDefaultReplicates;
    std::size_t grid_size = kDefaultPostGrid;
};

[[nodiscard]] PowerCurve run_power_study(const PowerStudyConfig& cfg);

struct ValidationStudyConfig {
    SimConfig base;                         // anticipation DGP, e.g. ATT1*
    std::vector<double> s_values = {1.0, 1.25, 1.5, 1.75, 2.0};
    std::vector<StudyBand> bands = {StudyBand::ScbPb, StudyBand::ScbMb, StudyBand::Naive, StudyBand::Bonferroni};
    double alpha = 0.05;
    std::size_t B = kDefaultReplicates;
    std::size_t grid_size = kDefaultPreGrid;
};

[[nodiscard]] PowerCurve run_validation_study(const ValidationStudyConfig& cfg);

/// Seed of the independent training draw for the trend reference band.
[[nodiscard]] constexpr std::uint64_t training_seed(std::uint64_t study_seed) noexcept { return study_seed ^ 0x5EEDULL; }

}  // namespace hesp
