#include "hesp/bands.hpp"

#include "hesp/error.hpp"
#include "hesp/parallel.hpp"
#include "hesp/rng.hpp"
#include "hesp/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>

namespace hesp {

namespace {

constexpr double kPsdWarnFraction = 1e-6;
constexpr double kPsdFailFraction = 1e-2;

void check_level(double alpha) {
    if (!(alpha > 0.0 && alpha < 0.5)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 0.5)");
}

void check_config(const CritConfig& cfg, bool bootstrap) {
    check_level(cfg.alpha);
    if (cfg.grid_size == 0) throw Error(ErrorCode::InvalidArgument, "grid size must be positive");
    if (bootstrap && cfg.B < 100) throw Error(ErrorCode::InvalidArgument, "need at least 100 bootstrap replicates");
    if (!(cfg.domain.hi > cfg.domain.lo) && !(cfg.domain.hi == cfg.domain.lo && !cfg.domain.open_lo)) {
        throw Error(ErrorCode::InvalidArgument, "empty domain");
    }
}

// Sub-problem shared by the bootstraps: replicate deviations live on the
// knots covering the domain and are mapped to the grid by the cardinal
// spline weights of those knots.
struct BootSetup {
    std::vector<std::size_t> knots;
    Eigen::MatrixXd cov_k;                  // observed covariance on the knots
    Eigen::MatrixXd weights;                // valid grid rows x knots
    Eigen::VectorXd se;                     // sqrt(w' C w / n) on valid rows
};

BootSetup setup_boot(const std::vector<double>& times, const CovMatrix& cov, const CritConfig& cfg) {
    if (cov.times != times) throw Error(ErrorCode::DimensionMismatch, "estimate and covariance grids differ");
    BootSetup s;
    s.knots = covering_knots(times, cfg.domain);
    const auto K = static_cast<Eigen::Index>(s.knots.size());
    std::vector<double> sub(s.knots.size());
    s.cov_k.resize(K, K);
    for (Eigen::Index a = 0; a < K; ++a) {
        sub[static_cast<std::size_t>(a)] = times[s.knots[static_cast<std::size_t>(a)]];
        for (Eigen::Index b = 0; b < K; ++b) {
            s.cov_k(a, b) = cov.cov(static_cast<Eigen::Index>(s.knots[static_cast<std::size_t>(a)]),
                                    static_cast<Eigen::Index>(s.knots[static_cast<std::size_t>(b)]));
        }
    }
    if (!s.cov_k.allFinite()) throw Error(ErrorCode::NonPSDCovariance, "covariance has non-finite entries");
    const SplineBasis basis(sub);
    const std::vector<double> grid = make_grid(cfg.domain, cfg.grid_size);
    const Eigen::MatrixXd w = basis.weight_matrix(grid);
    const double ridge = 1e-10 * std::max(s.cov_k.diagonal().maxCoeff(), 0.0);
    const double n = static_cast<double>(cov.n_units);
    std::vector<Eigen::Index> keep;
    std::vector<double> se;
    for (Eigen::Index k = 0; k < w.rows(); ++k) {
        const double v = w.row(k).dot(s.cov_k * w.row(k).transpose());
        if (v > ridge && v > 0.0) {
            keep.push_back(k);
            se.push_back(std::sqrt(v / n));
        }
    }
    if (keep.empty()) throw Error(ErrorCode::DegenerateGrid, "no grid point has positive variance");
    s.weights.resize(static_cast<Eigen::Index>(keep.size()), K);
    s.se.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t j = 0; j < keep.size(); ++j) {
        s.weights.row(static_cast<Eigen::Index>(j)) = w.row(keep[j]);
        s.se(static_cast<Eigen::Index>(j)) = se[j];
    }
    return s;
}

double statistic(const Eigen::VectorXd& dev, const Eigen::VectorXd& se, Side side) {
    double out = side == Side::Sup ? 0.0 : std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < dev.size(); ++k) {
        const double z = std::abs(dev(k)) / se(k);
        out = side == Side::Sup ? std::max(out, z) : std::min(out, z);
    }
    return out;
}

CriticalValue finish(std::vector<double>& stats, const CritConfig& cfg, CritMethod method, double df) {
    CriticalValue cv;
    const double p = cfg.side == Side::Sup ? 1.0 - cfg.alpha / 2.0 : 1.0 - cfg.alpha;
    cv.value = empirical_quantile(stats, p);
    cv.side = cfg.side;
    cv.alpha = cfg.alpha;
    cv.method = method;
    cv.domain = cfg.domain;
    cv.B = cfg.B;
    cv.seed = cfg.seed;
    cv.grid_size = cfg.grid_size;
    cv.df = df;
    return cv;
}

void record_clip(CriticalValue& cv, double fraction) {
    cv.clipped_fraction = fraction;
    if (fraction > kPsdWarnFraction) {
        cv.warning = "covariance repaired: clipped negative eigenvalues carrying " + format_real(fraction) +
                     " of the trace";
    }
}

double kac_rice_factor(double u, double df, KacRiceForm form) {
    if (form == KacRiceForm::Printed) return std::pow(1.0 + u / df, df / 2.0);
    if (std::isinf(df)) return std::exp(-0.5 * u * u);
    return std::pow(1.0 + u * u / df, -(df - 1.0) / 2.0);
}

}  // namespace

std::string to_string(Side side) { return side == Side::Sup ? "sup" : "inf"; }

std::string to_string(CritMethod method) {
    switch (method) {
        case CritMethod::ParamBoot: return "param-boot";
        case CritMethod::MultBoot: return "mult-boot";
        case CritMethod::KacRice: return "kac-rice";
    }
    return "param-boot";
}

std::string to_string(KacRiceForm form) { return form == KacRiceForm::Printed ? "printed" : "corrected"; }

std::string to_string(BandKind kind) {
    switch (kind) {
        case BandKind::Pointwise: return "pointwise";
        case BandKind::Bonferroni: return "bonferroni";
        case BandKind::ScbSup: return "scb-sup";
        case BandKind::ScbInfTwoSided: return "scb-inf-two-sided";
        case BandKind::ScbInfPlus: return "scb-inf-plus";
        case BandKind::ScbInfMinus: return "scb-inf-minus";
    }
    return "pointwise";
}

Side parse_side(const std::string& s) {
    if (s == "sup") return Side::Sup;
    if (s == "inf") return Side::Inf;
    throw Error(ErrorCode::InvalidArgument, "side must be sup or inf, got '" + s + "'");
}

CritMethod parse_method(const std::string& s) {
    if (s == "param-boot" || s == "pb" || s == "PB") return CritMethod::ParamBoot;
    if (s == "mult-boot" || s == "mb" || s == "MB") return CritMethod::MultBoot;
    if (s == "kac-rice" || s == "kr" || s == "KR") return CritMethod::KacRice;
    throw Error(ErrorCode::InvalidArgument, "method must be param-boot, mult-boot or kac-rice, got '" + s + "'");
}

KacRiceForm parse_kac_rice_form(const std::string& s) {
    if (s == "corrected") return KacRiceForm::Corrected;
    if (s == "printed") return KacRiceForm::Printed;
    throw Error(ErrorCode::InvalidArgument, "kac_rice_form must be printed or corrected, got '" + s + "'");
}

BandKind parse_band_kind(const std::string& s) {
    for (BandKind k : {BandKind::Pointwise, BandKind::Bonferroni, BandKind::ScbSup, BandKind::ScbInfTwoSided,
                       BandKind::ScbInfPlus, BandKind::ScbInfMinus}) {
        if (to_string(k) == s) return k;
    }
    throw Error(ErrorCode::InvalidArgument, "unknown band kind '" + s + "'");
}

std::vector<double> make_grid(const Domain& domain, std::size_t m) {
    if (m == 0) throw Error(ErrorCode::InvalidArgument, "grid size must be positive");
    std::vector<double> g(m);
    const double span = domain.hi - domain.lo;
    if (domain.open_lo) {
        for (std::size_t k = 0; k < m; ++k) g[k] = domain.lo + span * static_cast<double>(k + 1) / static_cast<double>(m);
    } else if (m == 1) {
        g[0] = domain.hi;
    } else {
        for (std::size_t k = 0; k < m; ++k) {
            g[k] = domain.lo + span * static_cast<double>(k) / static_cast<double>(m - 1);
        }
    }
    g.back() = domain.hi;
    return g;
}

Domain post_domain(double t_post) { return {0.0, t_post, true}; }

Domain pre_domain(double t_pre, double t_a) {
    if (t_a < -t_pre) throw Error(ErrorCode::EmptyPreAnticipationWindow, "t_A lies before the first period");
    if (t_a > 0.0) throw Error(ErrorCode::InvalidArgument, "t_A must not exceed 0");
    return {-t_pre, t_a, false};
}

std::vector<std::size_t> covering_knots(const std::vector<double>& times, const Domain& domain) {
    if (times.size() < 2) throw Error(ErrorCode::TooFewKnots, "need at least 2 observed times");
    if (domain.lo < times.front() || domain.hi > times.back()) {
        throw Error(ErrorCode::OutOfDomain, "domain [" + format_real(domain.lo) + ", " + format_real(domain.hi) +
                                                "] exceeds the observed times");
    }
    std::size_t first = 0;
    for (std::size_t j = 0; j < times.size(); ++j) {
        if (times[j] <= domain.lo) first = j;
    }
    std::size_t last = times.size() - 1;
    for (std::size_t j = times.size(); j-- > 0;) {
        if (times[j] >= domain.hi) last = j;
    }
    if (last <= first) {
        if (last + 1 < times.size()) {
            last = first + 1;
        } else {
            first = last - 1;
        }
    }
    std::vector<std::size_t> idx;
    for (std::size_t j = first; j <= last; ++j) idx.push_back(j);
    return idx;
}

PsdFactor psd_factor(const Eigen::MatrixXd& c) {
    if (!c.allFinite()) throw Error(ErrorCode::NonPSDCovariance, "covariance has non-finite entries");
    const Eigen::MatrixXd sym = 0.5 * (c + c.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw Error(ErrorCode::NonPSDCovariance, "eigendecomposition failed");
    Eigen::VectorXd ev = es.eigenvalues();
    double clipped = 0.0;
    double total = 0.0;
    for (Eigen::Index k = 0; k < ev.size(); ++k) {
        if (ev(k) < 0.0) {
            clipped += -ev(k);
            ev(k) = 0.0;
        }
        total += ev(k);
    }
    PsdFactor out;
    out.clipped_fraction = total > 0.0 ? clipped / total : (clipped > 0.0 ? 1.0 : 0.0);
    if (out.clipped_fraction > kPsdFailFraction) {
        throw Error(ErrorCode::NonPSDCovariance,
                    "covariance is far from positive semi-definite (clipped fraction " + format_real(out.clipped_fraction) + ")");
    }
    out.factor = es.eigenvectors() * ev.cwiseSqrt().asDiagonal();
    return out;
}

Multiplier mammen_multiplier() noexcept {
    const double r5 = std::sqrt(5.0);
    return {(1.0 - r5) / 2.0, (1.0 + r5) / 2.0, (5.0 + r5) / 10.0};
}

CriticalValue crit_param_boot(const PointwiseEstimate& est, const CovMatrix& cov, const CritConfig& cfg) {
    check_config(cfg, true);
    const BootSetup s = setup_boot(est.times, cov, cfg);
    const PsdFactor f = psd_factor(s.cov_k);
    const Eigen::MatrixXd map = s.weights * f.factor / std::sqrt(static_cast<double>(cov.n_units));
    const auto K = f.factor.cols();

    std::vector<double> stats(cfg.B);
    parallel_for(cfg.B, [&](std::size_t b) {
        CounterRng rng(cfg.seed, b);
        Eigen::VectorXd xi(K);
        for (Eigen::Index k = 0; k < K; ++k) xi(k) = rng.normal();
        stats[b] = statistic(map * xi, s.se, cfg.side);
    });
    CriticalValue cv = finish(stats, cfg, CritMethod::ParamBoot, static_cast<double>(cov.n_units) - 1.0);
    record_clip(cv, f.clipped_fraction);
    return cv;
}

CriticalValue crit_mult_boot(const DemeanedPanel& dp, const PointwiseEstimate& est, const CovMatrix& cov,
                             const CritConfig& cfg) {
    check_config(cfg, true);
    if (est.kind == EstimatorKind::StaggeredAggregate) {
        throw Error(ErrorCode::InvalidArgument, "multiplier bootstrap needs unit residuals of a single design");
    }
    if (static_cast<std::size_t>(dp.d_dot.size()) != est.n_units || dp.times != est.times) {
        throw Error(ErrorCode::DimensionMismatch, "demeaned panel does not match the estimate");
    }
    const BootSetup s = setup_boot(est.times, cov, cfg);
    const Eigen::MatrixXd res = did_residuals(dp, est);
    const auto n = dp.d_dot.size();
    const auto K = static_cast<Eigen::Index>(s.knots.size());
    const double sdd = dp.d_dot.squaredNorm();
    if (!(sdd >= 1e-14)) throw Error(ErrorCode::NoTreatmentVariation, "all units share one treatment status");

    // Replicate deviation at knot k: sum_i d_i v_i r_i(k) / sum_i d_i^2.
    Eigen::MatrixXd a(K, n);
    for (Eigen::Index k = 0; k < K; ++k) {
        const auto col = static_cast<Eigen::Index>(s.knots[static_cast<std::size_t>(k)]);
        for (Eigen::Index i = 0; i < n; ++i) a(k, i) = dp.d_dot(i) * res(i, col) / sdd;
    }
    const Multiplier mult = mammen_multiplier();

    std::vector<double> stats(cfg.B);
    parallel_for(cfg.B, [&](std::size_t b) {
        CounterRng rng(cfg.seed, b);
        Eigen::VectorXd v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform() < mult.p_low ? mult.low : mult.high;
        const Eigen::VectorXd knot_dev = a * v;
        stats[b] = statistic(s.weights * knot_dev, s.se, cfg.side);
    });
    return finish(stats, cfg, CritMethod::MultBoot, static_cast<double>(cov.n_units) - 1.0);
}

double kac_rice_solve(double roughness, double alpha, double df, KacRiceForm form) {
    check_level(alpha);
    if (!(df > 0.0)) throw Error(ErrorCode::InvalidArgument, "degrees of freedom must be positive");
    // The corrected form matches the bootstraps' P(sup |T| > u) = alpha / 2,
    // i.e. alpha / 4 per tail; the printed form keeps its stated target.
    const double target = form == KacRiceForm::Corrected ? alpha / 4.0 : alpha / 2.0;
    const auto f = [&](double u) { return t_cdf(-u, df) + roughness * kac_rice_factor(u, df, form) - target; };
    double lo = 0.0;
    double hi = 50.0;
    double flo = f(lo);
    const double fhi = f(hi);
    if (!(flo > 0.0 && fhi < 0.0)) {
        throw Error(ErrorCode::NoRoot, "tail equation has no root in [0, 50] (roughness " + format_real(roughness) + ")");
    }
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

CriticalValue crit_kac_rice(const CovSurface& surface, const CritConfig& cfg, double df) {
    if (cfg.side == Side::Inf) throw Error(ErrorCode::InfSideUnsupported, "Kac-Rice is available for sup bands only");
    check_config(cfg, false);
    if (cfg.domain.lo < surface.lo() || cfg.domain.hi > surface.hi()) {
        throw Error(ErrorCode::OutOfDomain, "domain exceeds the covariance surface");
    }
    const double ridge = default_ridge(surface);
    const Eigen::MatrixXd& c = surface.values();
    const SplineBasis& basis = surface.basis();
    const auto tau = [&](double t) -> std::optional<double> {
        try {
            return corr_roughness(c, basis.weights(t, 0), basis.weights(t, 1), ridge);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::DegenerateVariance) return std::nullopt;
            throw;
        }
    };
    // Adaptive trapezoid on each grid segment; degenerate endpoints take the
    // value just inside the segment.
    const auto value_at = [&](double t, double toward) {
        if (auto v = tau(t)) return *v;
        if (auto v = tau(t + (toward - t) / 1024.0)) return *v;
        return std::numeric_limits<double>::quiet_NaN();
    };
    std::function<double(double, double, double, double, int)> refine =
        [&](double a, double b, double fa, double fb, int depth) -> double {
        const double m = 0.5 * (a + b);
        const double fm = value_at(m, b);
        if (std::isnan(fm)) return 0.0;
        const double coarse = 0.5 * (b - a) * (fa + fb);
        const double fine = 0.25 * (b - a) * (fa + 2.0 * fm + fb);
        if (depth >= 12 || std::abs(fine - coarse) <= 1e-9 * std::max(1.0, std::abs(fine))) return fine;
        return refine(a, m, fa, fm, depth + 1) + refine(m, b, fm, fb, depth + 1);
    };
    std::vector<double> nodes = make_grid({cfg.domain.lo, cfg.domain.hi, false}, cfg.grid_size + 1);
    if (nodes.size() < 2) nodes = {cfg.domain.lo, cfg.domain.hi};
    double integral = 0.0;
    bool any = false;
    for (std::size_t k = 0; k + 1 < nodes.size(); ++k) {
        const double a = nodes[k];
        const double b = nodes[k + 1];
        if (!(b > a)) continue;
        const double fa = value_at(a, b);
        const double fb = value_at(b, a);
        if (std::isnan(fa) || std::isnan(fb)) continue;
        any = true;
        integral += refine(a, b, fa, fb, 0);
    }
    if (!any) throw Error(ErrorCode::DegenerateGrid, "no grid segment has positive variance");

    CriticalValue cv;
    cv.roughness = integral / (2.0 * std::numbers::pi);
    cv.value = kac_rice_solve(cv.roughness, cfg.alpha, df, cfg.kac_rice_form);
    cv.side = Side::Sup;
    cv.alpha = cfg.alpha;
    cv.method = CritMethod::KacRice;
    cv.domain = cfg.domain;
    cv.B = 0;
    cv.seed = cfg.seed;
    cv.grid_size = cfg.grid_size;
    cv.df = df;
    return cv;
}

CriticalValue crit_kac_rice(const CovMatrix& cov, const CritConfig& cfg) {
    if (cfg.side == Side::Inf) throw Error(ErrorCode::InfSideUnsupported, "Kac-Rice is available for sup bands only");
    const std::vector<std::size_t> idx = covering_knots(cov.times, cfg.domain);
    const auto K = static_cast<Eigen::Index>(idx.size());
    std::vector<double> sub(idx.size());
    Eigen::MatrixXd ck(K, K);
    for (Eigen::Index a = 0; a < K; ++a) {
        sub[static_cast<std::size_t>(a)] = cov.times[idx[static_cast<std::size_t>(a)]];
        for (Eigen::Index b = 0; b < K; ++b) {
            ck(a, b) = cov.cov(static_cast<Eigen::Index>(idx[static_cast<std::size_t>(a)]),
                               static_cast<Eigen::Index>(idx[static_cast<std::size_t>(b)]));
        }
    }
    return crit_kac_rice(tensor_fit(sub, ck), cfg, static_cast<double>(cov.n_units) - 1.0);
}

FittedCurves fit_curves(const PointwiseEstimate& est, const CovMatrix& cov) {
    if (cov.times != est.times) throw Error(ErrorCode::DimensionMismatch, "estimate and covariance grids differ");
    std::vector<double> beta(est.beta.data(), est.beta.data() + est.beta.size());
    return {natural_cubic_fit(est.times, beta), tensor_fit(cov.times, cov.cov), est.n_units};
}

namespace {

Band symmetric_band(const SplineCurve& beta, const CovSurface& cov, const std::vector<double>& grid, double q,
                    std::size_t n) {
    if (n < 2) throw Error(ErrorCode::InvalidArgument, "need at least 2 units");
    Band band;
    band.grid = grid;
    band.estimate.resize(grid.size());
    band.lower.resize(grid.size());
    band.upper.resize(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double b = beta.eval(grid[k]);
        const double se = std::sqrt(std::max(cov.diag(grid[k]), 0.0) / static_cast<double>(n));
        band.estimate[k] = b;
        band.lower[k] = b - q * se;
        band.upper[k] = b + q * se;
    }
    band.df = static_cast<double>(n) - 1.0;
    return band;
}

}  // namespace

Band pointwise_band(const SplineCurve& beta, const CovSurface& cov, const std::vector<double>& grid, double alpha,
                    std::size_t n) {
    check_level(alpha);
    Band band = symmetric_band(beta, cov, grid, t_quantile(1.0 - alpha / 2.0, static_cast<double>(n) - 1.0), n);
    band.kind = BandKind::Pointwise;
    band.alpha = alpha;
    band.crit = t_quantile(1.0 - alpha / 2.0, static_cast<double>(n) - 1.0);
    return band;
}

Band bonferroni_band(const SplineCurve& beta, const CovSurface& cov, const std::vector<double>& grid, double alpha,
                     std::size_t n, std::size_t m) {
    check_level(alpha);
    if (m == 0) m = grid.size();
    const double q = t_quantile(1.0 - alpha / (2.0 * static_cast<double>(m)), static_cast<double>(n) - 1.0);
    Band band = symmetric_band(beta, cov, grid, q, n);
    band.kind = BandKind::Bonferroni;
    band.alpha = alpha;
    band.crit = q;
    return band;
}

Band build_band(const SplineCurve& beta, const CovSurface& cov, const CriticalValue& crit,
                const std::vector<double>& grid, std::size_t n, std::optional<BandKind> kind) {
    const BandKind k = kind.value_or(crit.side == Side::Sup ? BandKind::ScbSup : BandKind::ScbInfTwoSided);
    const bool inf_kind = k == BandKind::ScbInfTwoSided || k == BandKind::ScbInfPlus || k == BandKind::ScbInfMinus;
    if (k == BandKind::Pointwise || k == BandKind::Bonferroni) {
        throw Error(ErrorCode::InvalidArgument, "critical-value bands must be scb kinds");
    }
    if ((crit.side == Side::Sup) == inf_kind) {
        throw Error(ErrorCode::InvalidArgument, "band kind " + to_string(k) + " does not match a " +
                                                    to_string(crit.side) + " critical value");
    }
    const double lo = crit.domain.lo - 1e-12 * std::max(1.0, std::abs(crit.domain.lo));
    const double hi = crit.domain.hi + 1e-12 * std::max(1.0, std::abs(crit.domain.hi));
    for (double t : grid) {
        if (t < lo || t > hi) throw Error(ErrorCode::OutOfDomain, "grid point " + format_real(t) + " outside the critical-value domain");
    }
    Band band = symmetric_band(beta, cov, grid, crit.value, n);
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (k == BandKind::ScbInfPlus) std::fill(band.lower.begin(), band.lower.end(), -inf);
    if (k == BandKind::ScbInfMinus) std::fill(band.upper.begin(), band.upper.end(), inf);
    band.kind = k;
    band.alpha = crit.alpha;
    band.method = crit.method;
    band.crit = crit.value;
    band.seed = crit.seed;
    return band;
}

}  // namespace hesp
