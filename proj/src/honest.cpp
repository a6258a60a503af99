#include "hesp/honest.hpp"

#include "hesp/error.hpp"
#include "hesp/stats.hpp"

#include <algorithm>
#include <cmath>

namespace hesp {

namespace {

constexpr double kStrictTol = 1e-12;

void check_grid(const Band& band, const std::vector<double>& grid) {
    if (band.grid.size() != grid.size()) throw Error(ErrorCode::GridMismatch, "band and test grids differ in size");
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (std::abs(band.grid[k] - grid[k]) > 1e-12 * std::max(1.0, std::abs(grid[k]))) {
            throw Error(ErrorCode::GridMismatch, "band and test grids differ at index " + std::to_string(k));
        }
    }
}

}  // namespace

std::string to_string(RefKind kind) {
    switch (kind) {
        case RefKind::Anticipation: return "anticipation";
        case RefKind::Trend: return "trend";
        case RefKind::Union: return "union";
    }
    return "anticipation";
}

RefKind parse_ref_kind(const std::string& s) {
    if (s == "anticipation") return RefKind::Anticipation;
    if (s == "trend") return RefKind::Trend;
    if (s == "union") return RefKind::Union;
    throw Error(ErrorCode::InvalidArgument, "reference band kind must be anticipation, trend or union, got '" + s + "'");
}

ReferenceBand ReferenceBand::anticipation(double t_a, double s_l, double s_u, double center, double se) {
    if (s_l < 0.0 || s_u < 0.0) throw Error(ErrorCode::InvalidArgument, "S_l and S_u must be non-negative");
    ReferenceBand r;
    r.kind_ = RefKind::Anticipation;
    r.t_a_ = t_a;
    r.s_l_ = s_l;
    r.s_u_ = s_u;
    r.center_ = center;
    r.se_ = se;
    return r;
}

ReferenceBand ReferenceBand::trend(double m_l, double m_u, double tr, double rm) {
    if (m_l < 0.0 || m_u < 0.0) throw Error(ErrorCode::InvalidArgument, "M_l and M_u must be non-negative");
    ReferenceBand r;
    r.kind_ = RefKind::Trend;
    r.m_l_ = m_l;
    r.m_u_ = m_u;
    r.tr_ = tr;
    r.rm_ = rm;
    return r;
}

ReferenceBand ReferenceBand::make_union(std::vector<ReferenceBand> parts) {
    if (parts.empty()) throw Error(ErrorCode::EmptyList, "union of no reference bands");
    if (parts.size() == 1) return parts.front();
    ReferenceBand r;
    r.kind_ = RefKind::Union;
    r.parts_ = std::move(parts);
    return r;
}

double ReferenceBand::lower(double t) const {
    switch (kind_) {
        case RefKind::Anticipation: return center_ - s_l_ * se_;
        case RefKind::Trend: return std::min((tr_ - m_l_ * rm_) * t, (tr_ + m_u_ * rm_) * t);
        case RefKind::Union: {
            double v = parts_.front().lower(t);
            for (std::size_t j = 1; j < parts_.size(); ++j) v = std::min(v, parts_[j].lower(t));
            return v;
        }
    }
    return 0.0;
}

double ReferenceBand::upper(double t) const {
    switch (kind_) {
        case RefKind::Anticipation: return center_ + s_u_ * se_;
        case RefKind::Trend: return std::max((tr_ - m_l_ * rm_) * t, (tr_ + m_u_ * rm_) * t);
        case RefKind::Union: {
            double v = parts_.front().upper(t);
            for (std::size_t j = 1; j < parts_.size(); ++j) v = std::max(v, parts_[j].upper(t));
            return v;
        }
    }
    return 0.0;
}

std::vector<double> ReferenceBand::lower(const std::vector<double>& grid) const {
    std::vector<double> out(grid.size());
    std::transform(grid.begin(), grid.end(), out.begin(), [this](double t) { return lower(t); });
    return out;
}

std::vector<double> ReferenceBand::upper(const std::vector<double>& grid) const {
    std::vector<double> out(grid.size());
    std::transform(grid.begin(), grid.end(), out.begin(), [this](double t) { return upper(t); });
    return out;
}

ReferenceBand refband_anticipation(const SplineCurve& beta, const CovSurface& cov, std::size_t n, double t_a,
                                   double s_l, double s_u) {
    if (t_a > 0.0 || t_a < beta.lo()) {
        throw Error(ErrorCode::InvalidArgument, "t_A must lie in the pre-treatment period");
    }
    const double var = cov.diag(t_a);
    if (!(var > default_ridge(cov))) {
        throw Error(ErrorCode::DegenerateVariance, "variance at t_A = " + format_real(t_a) + " is degenerate");
    }
    return ReferenceBand::anticipation(t_a, s_l, s_u, beta.eval(t_a), std::sqrt(var / static_cast<double>(n)));
}

TrendStats trend_stats(const SplineCurve& beta) {
    const double lo = beta.lo();
    if (!(lo < 0.0) || beta.hi() < 0.0) throw Error(ErrorCode::OutOfDomain, "pre-period is not inside the spline domain");
    const double t_pre = -lo;
    TrendStats s;
    s.tr = (beta.eval(0.0) - beta.eval(lo)) / t_pre;
    const auto& x = beta.knots();
    double total = 0.0;
    for (std::size_t j = 0; j + 1 < x.size() && x[j] < 0.0; ++j) {
        const double a = x[j];
        const double b = std::min(x[j + 1], 0.0);
        std::vector<double> pts{a};
        for (double c : beta.critical_points(j)) {
            if (c > a && c < b) pts.push_back(c);
        }
        pts.push_back(b);
        for (std::size_t k = 0; k + 1 < pts.size(); ++k) total += std::abs(beta.eval(pts[k + 1]) - beta.eval(pts[k]));
    }
    s.rm = total / t_pre;
    return s;
}

ReferenceBand refband_trend(const SplineCurve& beta, double m_l, double m_u) {
    const TrendStats s = trend_stats(beta);
    return ReferenceBand::trend(m_l, m_u, s.tr, s.rm);
}

ReferenceBand refband_union(std::vector<ReferenceBand> bands) { return ReferenceBand::make_union(std::move(bands)); }

std::vector<Span> grid_spans(const std::vector<double>& grid, const std::vector<bool>& flags) {
    std::vector<Span> spans;
    std::size_t k = 0;
    while (k < grid.size()) {
        if (!flags[k]) {
            ++k;
            continue;
        }
        std::size_t e = k;
        while (e + 1 < grid.size() && flags[e + 1]) ++e;
        spans.push_back({grid[k], grid[e]});
        k = e + 1;
    }
    return spans;
}

TestResult relevance_test(const Band& scb_sup, const ReferenceBand& ref, const std::vector<double>& post_grid) {
    check_grid(scb_sup, post_grid);
    if (scb_sup.kind != BandKind::ScbSup) throw Error(ErrorCode::InvalidArgument, "relevance test needs an scb-sup band");
    std::vector<bool> disjoint(post_grid.size());
    for (std::size_t k = 0; k < post_grid.size(); ++k) {
        const double t = post_grid[k];
        disjoint[k] = scb_sup.lower[k] > ref.upper(t) || scb_sup.upper[k] < ref.lower(t);
    }
    TestResult r;
    r.test = TestKind::Relevance;
    r.alpha = scb_sup.alpha;
    r.spans = grid_spans(post_grid, disjoint);
    r.rejected = !r.spans.empty();
    return r;
}

TestResult equivalence_validate(const Band& scb_inf, const ReferenceBand& ref, const std::vector<double>& pre_grid) {
    if (pre_grid.empty()) throw Error(ErrorCode::EmptyPreAnticipationWindow, "pre-anticipation window is empty");
    check_grid(scb_inf, pre_grid);
    if (scb_inf.kind != BandKind::ScbInfTwoSided) {
        throw Error(ErrorCode::InvalidArgument, "equivalence validation needs an scb-inf-two-sided band");
    }
    std::vector<bool> fails(pre_grid.size());
    for (std::size_t k = 0; k < pre_grid.size(); ++k) {
        const double t = pre_grid[k];
        // The reference time carries no information: beta(0) = 0 by construction.
        if (t == 0.0) continue;
        const bool inside = scb_inf.lower[k] > ref.lower(t) + kStrictTol && scb_inf.upper[k] < ref.upper(t) - kStrictTol;
        fails[k] = !inside;
    }
    TestResult r;
    r.test = TestKind::Equivalence;
    r.alpha = scb_inf.alpha;
    r.spans = grid_spans(pre_grid, fails);
    r.rejected = r.spans.empty();
    return r;
}

ReferenceBand make_refband(const FittedCurves& fit, const RefBandConfig& cfg, double alpha) {
    const auto single = [&](RefKind kind) {
        if (kind == RefKind::Trend) return refband_trend(fit.beta, cfg.m_l, cfg.m_u);
        const double s_default = t_quantile(1.0 - alpha / 2.0, static_cast<double>(fit.n) - 1.0);
        return refband_anticipation(fit.beta, fit.cov, fit.n, cfg.t_a, cfg.s_l.value_or(s_default),
                                    cfg.s_u.value_or(s_default));
    };
    if (cfg.kind != RefKind::Union) return single(cfg.kind);
    if (cfg.union_of.empty()) throw Error(ErrorCode::EmptyList, "union of no reference bands");
    std::vector<ReferenceBand> parts;
    for (RefKind k : cfg.union_of) {
        if (k == RefKind::Union) throw Error(ErrorCode::InvalidArgument, "nested union reference band");
        parts.push_back(single(k));
    }
    return refband_union(std::move(parts));
}

HonestEventStudy honest_report(const DemeanedPanel* dp, const PointwiseEstimate& est, const CovMatrix& cov,
                               const ReportConfig& cfg) {
    HonestEventStudy rep;
    rep.estimate = est;
    rep.covariance = cov;
    rep.config = cfg;
    const FittedCurves fit = fit_curves(est, cov);
    const std::size_t n = est.n_units;

    const Domain post = post_domain(est.times.back());
    const std::vector<double> post_grid = make_grid(post, cfg.post_grid);
    const double t_a_eq = cfg.equivalence_t_a.value_or(cfg.refband.kind == RefKind::Trend ? 0.0 : cfg.refband.t_a);
    const Domain pre = pre_domain(-est.times.front(), t_a_eq);
    const std::vector<double> pre_grid = make_grid(pre, cfg.pre_grid);

    const auto crit_for = [&](CritMethod method, const CritConfig& cc) {
        switch (method) {
            case CritMethod::ParamBoot: return crit_param_boot(est, cov, cc);
            case CritMethod::MultBoot:
                if (dp == nullptr) throw Error(ErrorCode::InvalidArgument, "multiplier bootstrap needs unit residuals");
                return crit_mult_boot(*dp, est, cov, cc);
            case CritMethod::KacRice: return crit_kac_rice(cov, cc);
        }
        throw Error(ErrorCode::InvalidArgument, "unknown method");
    };

    CritConfig sup_cfg;
    sup_cfg.side = Side::Sup;
    sup_cfg.alpha = cfg.alpha;
    sup_cfg.domain = post;
    sup_cfg.grid_size = cfg.post_grid;
    sup_cfg.B = cfg.B;
    sup_cfg.seed = cfg.seed;
    sup_cfg.kac_rice_form = cfg.kac_rice_form;
    const CriticalValue sup = crit_for(cfg.method, sup_cfg);

    CritConfig inf_cfg = sup_cfg;
    inf_cfg.side = Side::Inf;
    inf_cfg.domain = pre;
    inf_cfg.grid_size = cfg.pre_grid;
    rep.inf_method = cfg.method == CritMethod::KacRice ? CritMethod::ParamBoot : cfg.method;
    const CriticalValue inf = crit_for(rep.inf_method, inf_cfg);
    for (const auto* c : {&sup, &inf}) {
        if (!c->warning.empty()) rep.warnings.push_back(c->warning);
    }

    rep.bands.push_back(pointwise_band(fit.beta, fit.cov, post_grid, cfg.alpha, n));
    if (cfg.bonferroni) rep.bands.push_back(bonferroni_band(fit.beta, fit.cov, post_grid, cfg.alpha, n));
    rep.bands.push_back(build_band(fit.beta, fit.cov, sup, post_grid, n, BandKind::ScbSup));
    rep.bands.push_back(build_band(fit.beta, fit.cov, inf, pre_grid, n, BandKind::ScbInfTwoSided));

    rep.refband = make_refband(fit, cfg.refband, cfg.alpha);
    rep.refband_grid = pre_grid;
    for (double t : post_grid) {
        if (t > rep.refband_grid.back()) rep.refband_grid.push_back(t);
    }
    rep.relevance = relevance_test(rep.bands[rep.bands.size() - 2], rep.refband, post_grid);
    rep.equivalence = equivalence_validate(rep.bands.back(), rep.refband, pre_grid);
    return rep;
}

HonestEventStudy honest_report(const PanelData& data, const ReportConfig& cfg) {
    if (data.staggered()) {
        const StaggeredResult s = staggered_estimate(data, staggered_spec(data));
        if (cfg.method == CritMethod::MultBoot) {
            throw Error(ErrorCode::InvalidArgument, "multiplier bootstrap is not available for staggered aggregates");
        }
        return honest_report(nullptr, s.aggregate, s.aggregate_cov, cfg);
    }
    const EstimateBundle b = estimate_panel(data);
    return honest_report(&b.dp, b.est, b.cov, cfg);
}

}  // namespace hesp
