#pragma once

#include "hesp/bands.hpp"
#include "hesp/estimate.hpp"
#include "hesp/panel.hpp"
#include "hesp/spline.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hesp {

enum class RefKind { Anticipation, Trend, Union };

[[nodiscard]] std::string to_string(RefKind kind);
[[nodiscard]] RefKind parse_ref_kind(const std::string& s);

/// Envelope of plausible identification bias.
///
/// Anticipation: constant [c - S_l se, c + S_u se] with c and se taken at t_A.
/// Trend: the double cone between (TR - M_l RM) t and (TR + M_u RM) t.
/// Union: pointwise min of lowers and max of uppers of its parts.
class ReferenceBand {
public:
    [[nodiscard]] static ReferenceBand anticipation(double t_a, double s_l, double s_u, double center, double se);
    [[nodiscard]] static ReferenceBand trend(double m_l, double m_u, double tr, double rm);
    [[nodiscard]] static ReferenceBand make_union(std::vector<ReferenceBand> parts);

    [[nodiscard]] double lower(double t) const;
    [[nodiscard]] double upper(double t) const;
    [[nodiscard]] std::vector<double> lower(const std::vector<double>& grid) const;
    [[nodiscard]] std::vector<double> upper(const std::vector<double>& grid) const;

    [[nodiscard]] RefKind kind() const noexcept { return kind_; }
    [[nodiscard]] double t_a() const noexcept { return t_a_; }
    [[nodiscard]] double s_l() const noexcept { return s_l_; }
    [[nodiscard]] double s_u() const noexcept { return s_u_; }
    [[nodiscard]] double center() const noexcept { return center_; }
    [[nodiscard]] double se() const noexcept { return se_; }
    [[nodiscard]] double m_l() const noexcept { return m_l_; }
    [[nodiscard]] double m_u() const noexcept { return m_u_; }
    [[nodiscard]] double tr() const noexcept { return tr_; }
    [[nodiscard]] double rm() const noexcept { return rm_; }
    [[nodiscard]] const std::vector<ReferenceBand>& parts() const noexcept { return parts_; }

private:
    RefKind kind_ = RefKind::Anticipation;
    double t_a_ = 0.0, s_l_ = 0.0, s_u_ = 0.0, center_ = 0.0, se_ = 0.0;
    double m_l_ = 0.0, m_u_ = 0.0, tr_ = 0.0, rm_ = 0.0;
    std::vector<ReferenceBand> parts_;
};

[[nodiscard]] ReferenceBand refband_anticipation(const SplineCurve& beta, const CovSurface& cov, std::size_t n,
                                                 double t_a, double s_l, double s_u);

[[nodiscard]] ReferenceBand refband_trend(const SplineCurve& beta, double m_l, double m_u);

[[nodiscard]] ReferenceBand refband_union(std::vector<ReferenceBand> bands);

/// Average slope and mean absolute slope of the curve over [lo, 0].
struct TrendStats {
    double tr = 0.0;
    double rm = 0.0;
};
[[nodiscard]] TrendStats trend_stats(const SplineCurve& beta);

enum class TestKind { Relevance, Equivalence };

struct Span {
    double lo;
    double hi;
    bool operator==(const Span&) const = default;
};

struct TestResult {
    TestKind test = TestKind::Relevance;
    double alpha = 0.05;
    bool rejected = false;                  // relevance: H0 rejected; equivalence: band validated
    std::vector<Span> spans;                // significant spans, or violating spans

    [[nodiscard]] bool validated() const noexcept { return test == TestKind::Equivalence && rejected; }
};

/// Rejects where the sup band and the reference band are disjoint.
[[nodiscard]] TestResult relevance_test(const Band& scb_sup, const ReferenceBand& ref,
                                        const std::vector<double>& post_grid);

/// Validates when the two-sided inf band lies strictly inside the reference
/// band at every grid point of the pre-anticipation window.
[[nodiscard]] TestResult equivalence_validate(const Band& scb_inf, const ReferenceBand& ref,
                                              const std::vector<double>& pre_grid);

/// Maximal runs of flagged grid points as closed intervals.
[[nodiscard]] std::vector<Span> grid_spans(const std::vector<double>& grid, const std::vector<bool>& flags);

struct RefBandConfig {
    RefKind kind = RefKind::Anticipation;
    double t_a = -1.0;
    std::optional<double> s_l;              // default t_{1-alpha/2, n-1}
    std::optional<double> s_u;
    double m_l = 0.5;
    double m_u = 0.5;
    std::vector<RefKind> union_of = {RefKind::Anticipation, RefKind::Trend};
};

struct ReportConfig {
    double alpha = 0.05;
    CritMethod method = CritMethod::ParamBoot;
    std::size_t B = kDefaultReplicates;
    std::uint64_t seed = 1;
    std::size_t post_grid = kDefaultPostGrid;
    std::size_t pre_grid = kDefaultPreGrid;
    KacRiceForm kac_rice_form = KacRiceForm::Corrected;
    RefBandConfig refband;
    std::optional<double> equivalence_t_a;  // window end; defaults to refband.t_a
    bool bonferroni = false;
};

/// Everything an honest event-study plot shows.
struct HonestEventStudy {
    PointwiseEstimate estimate;
    CovMatrix covariance;
    std::vector<Band> bands;
    ReferenceBand refband;
    std::vector<double> refband_grid;
    TestResult relevance;
    TestResult equivalence;
    CritMethod inf_method = CritMethod::ParamBoot;
    ReportConfig config;
    std::vector<std::string> warnings;
};

/// Critical values are recomputed from (estimate, covariance, dp); callers
/// that cache the estimation step use this overload.
[[nodiscard]] HonestEventStudy honest_report(const DemeanedPanel* dp, const PointwiseEstimate& est,
                                             const CovMatrix& cov, const ReportConfig& cfg);

[[nodiscard]] HonestEventStudy honest_report(const PanelData& data, const ReportConfig& cfg);

/// Reference band from config on fitted curves.
[[nodiscard]] ReferenceBand make_refband(const FittedCurves& fit, const RefBandConfig& cfg, double alpha);

}  // namespace hesp
