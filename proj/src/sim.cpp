#include "hesp/sim.hpp"

#include "hesp/error.hpp"
#include "hesp/estimate.hpp"
#include "hesp/parallel.hpp"
#include "hesp/rng.hpp"
#include "hesp/stats.hpp"

#include <algorithm>
#include <cmath>

namespace hesp {

namespace {

constexpr int kMaxDrawAttempts = 100;

double rate_se(double p, std::size_t reps) {
    return reps == 0 ? 0.0 : std::sqrt(p * (1.0 - p) / static_cast<double>(reps));
}

}  // namespace

std::string to_string(AttKind kind) {
    switch (kind) {
        case AttKind::Att1: return "ATT1";
        case AttKind::Att2: return "ATT2";
        case AttKind::Att1Star: return "ATT1*";
        case AttKind::Att2Star: return "ATT2*";
    }
    return "ATT1";
}

std::string to_string(CovKind kind) { return kind == CovKind::Cov1 ? "Cov1" : "Cov2"; }

AttKind parse_att(const std::string& s) {
    if (s == "ATT1" || s == "att1") return AttKind::Att1;
    if (s == "ATT2" || s == "att2") return AttKind::Att2;
    if (s == "ATT1*" || s == "ATT1s" || s == "att1*" || s == "att1s") return AttKind::Att1Star;
    if (s == "ATT2*" || s == "ATT2s" || s == "att2*" || s == "att2s") return AttKind::Att2Star;
    throw Error(ErrorCode::InvalidArgument, "ATT must be ATT1, ATT2, ATT1* or ATT2*, got '" + s + "'");
}

CovKind parse_cov(const std::string& s) {
    if (s == "Cov1" || s == "cov1") return CovKind::Cov1;
    if (s == "Cov2" || s == "cov2") return CovKind::Cov2;
    throw Error(ErrorCode::InvalidArgument, "covariance must be Cov1 or Cov2, got '" + s + "'");
}

double cov_sigma2(CovKind) noexcept { return 4.0; }
double cov_nu(CovKind kind) noexcept { return kind == CovKind::Cov1 ? 1.5 : 2.0 / 3.0; }

double matern_generic(double h, double sigma2, double nu) {
    if (!(sigma2 > 0.0) || !(nu > 0.0)) throw Error(ErrorCode::InvalidArgument, "Matérn needs sigma2 > 0 and nu > 0");
    h = std::abs(h);
    if (h == 0.0) return sigma2;
    const double x = std::sqrt(2.0 * nu) * h;
    if (x > 700.0) return 0.0;
    return sigma2 * std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(x, nu) * std::cyl_bessel_k(nu, x);
}

double matern_cov(double s, double t, double sigma2, double nu) {
    const double h = std::abs(s - t) / 10.0;
    if (nu == 1.5) {
        if (!(sigma2 > 0.0)) throw Error(ErrorCode::InvalidArgument, "Matérn needs sigma2 > 0");
        const double x = std::sqrt(3.0) * h;
        return sigma2 * (1.0 + x) * std::exp(-x);
    }
    return matern_generic(h, sigma2, nu);
}

GpSampler::GpSampler(const std::vector<double>& grid, const std::function<double(double, double)>& cov) {
    const auto T = static_cast<Eigen::Index>(grid.size());
    Eigen::MatrixXd k(T, T);
    for (Eigen::Index a = 0; a < T; ++a) {
        for (Eigen::Index b = 0; b < T; ++b) k(a, b) = cov(grid[static_cast<std::size_t>(a)], grid[static_cast<std::size_t>(b)]);
    }
    k.diagonal().array() += 1e-10;
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success || !k.allFinite()) {
        throw Error(ErrorCode::NonPSDKernel, "kernel matrix is not positive definite after jitter");
    }
    l_ = llt.matrixL();
}

Eigen::VectorXd GpSampler::path(std::uint64_t seed, std::uint64_t stream) const {
    CounterRng rng(seed, stream);
    Eigen::VectorXd xi(l_.rows());
    for (Eigen::Index k = 0; k < xi.size(); ++k) xi(k) = rng.normal();
    return l_.triangularView<Eigen::Lower>() * xi;
}

Eigen::MatrixXd GpSampler::sample(std::size_t n, std::uint64_t seed) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), l_.rows());
    for (std::size_t i = 0; i < n; ++i) out.row(static_cast<Eigen::Index>(i)) = path(seed, i).transpose();
    return out;
}

Eigen::MatrixXd sample_gp(const std::vector<double>& grid, const std::function<double(double, double)>& cov,
                          std::size_t n, std::uint64_t seed) {
    return GpSampler(grid, cov).sample(n, seed);
}

double att_curve(AttKind kind, double a, double t, double t_post) {
    switch (kind) {
        case AttKind::Att1:
        case AttKind::Att2: {
            if (!(t > 0.0 && t <= t_post)) return 0.0;
            const double p = std::pow(t, 1.5);
            double v = 3.0 * p / (3.0 + p);
            if (kind == AttKind::Att2) v += 0.3 * std::cos(3.0 * t) - 0.3;
            return a * v;
        }
        case AttKind::Att1Star:
        case AttKind::Att2Star: {
            if (!(t > -4.0 && t <= t_post)) return 0.0;
            const double p = std::pow(t + 4.0, 1.5);
            double v = 2.0 * p / (3.0 + p);
            if (kind == AttKind::Att2Star) v += 0.3 * std::cos(3.0 * (t + 4.0)) - 0.3;
            return v;
        }
    }
    return 0.0;
}

double phi(double t) {
    const double u = t + 10.0;
    const double u3 = u * u * u;
    return (2000.0 * u3 - 150.0 * u3 * u + 3.0 * u3 * u * u) / (1024.0 * 625.0);
}

double pi_select(double lambda) { return 1.0 / (1.0 + std::exp(-3.0 * lambda)); }

void SimConfig::validate() const {
    if (n < 4) throw Error(ErrorCode::InvalidArgument, "n must be at least 4");
    if (T < 3) throw Error(ErrorCode::InvalidArgument, "T must be at least 3");
    if (!(t_pre > 0.0) || !(t_post > 0.0)) throw Error(ErrorCode::InvalidArgument, "T_pre and T_post must be positive");
    if (!(noise_variance() > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma2 must be positive");
    const auto g = grid();
    if (std::find(g.begin(), g.end(), 0.0) == g.end()) {
        throw Error(ErrorCode::MissingReferencePeriod, "simulation grid does not contain time 0");
    }
}

std::vector<double> SimConfig::grid() const {
    std::vector<double> g(T);
    const double span = t_pre + t_post;
    for (std::size_t k = 0; k < T; ++k) g[k] = -t_pre + span * static_cast<double>(k) / static_cast<double>(T - 1);
    // Snap values that are zero up to rounding so the reference time is exact.
    for (double& x : g) {
        if (std::abs(x) < 1e-12 * span) x = 0.0;
    }
    return g;
}

double true_beta(const SimConfig& cfg, double t) {
    const double delta_ta = att_curve(cfg.att, cfg.a, 0.0, cfg.t_post);
    return att_curve(cfg.att, cfg.a, t, cfg.t_post) - delta_ta + cfg.dt_slope * t;
}

GpSampler make_sampler(const SimConfig& cfg) {
    const double s2 = cfg.noise_variance();
    const double nu = cov_nu(cfg.cov);
    return GpSampler(cfg.grid(), [s2, nu](double s, double t) { return matern_cov(s, t, s2, nu); });
}

SimPanel generate_panel(const SimConfig& cfg, std::uint64_t seed) { return generate_panel(cfg, seed, make_sampler(cfg)); }

SimPanel generate_panel(const SimConfig& cfg, std::uint64_t seed, const GpSampler& sampler) {
    cfg.validate();
    const std::vector<double> grid = cfg.grid();
    if (sampler.factor().rows() != static_cast<Eigen::Index>(grid.size())) {
        throw Error(ErrorCode::DimensionMismatch, "sampler grid does not match the configuration");
    }
    const auto n = static_cast<Eigen::Index>(cfg.n);
    const auto T = static_cast<Eigen::Index>(grid.size());

    std::vector<double> beta(grid.size());
    std::vector<double> time_effect(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) {
        beta[k] = true_beta(cfg, grid[k]);
        time_effect[k] = phi(grid[k]);
    }

    for (int attempt = 0; attempt < kMaxDrawAttempts; ++attempt) {
        const std::uint64_t key = derive_seed(seed, static_cast<std::uint64_t>(attempt));
        std::vector<double> lambda(cfg.n);
        std::vector<double> d(cfg.n);
        std::size_t treated = 0;
        for (std::size_t i = 0; i < cfg.n; ++i) {
            CounterRng rng(key, 2 * i);
            lambda[i] = rng.uniform(-3.0, 3.0);
            d[i] = rng.bernoulli(pi_select(lambda[i])) ? 1.0 : 0.0;
            treated += d[i] == 1.0 ? 1 : 0;
        }
        if (treated == 0 || treated == cfg.n) continue;

        PanelData p;
        p.times = grid;
        p.treatment = d;
        p.unit_ids.resize(cfg.n);
        p.outcomes.resize(n, T);
        for (std::size_t i = 0; i < cfg.n; ++i) {
            p.unit_ids[i] = std::to_string(i + 1);
            const Eigen::VectorXd eps = sampler.path(key, 2 * i + 1);
            for (Eigen::Index k = 0; k < T; ++k) {
                const auto kk = static_cast<std::size_t>(k);
                p.outcomes(static_cast<Eigen::Index>(i), k) = beta[kk] * d[i] + lambda[i] + time_effect[kk] + eps(k);
            }
        }
        SimPanel out;
        out.data = std::move(p);
        out.truth = [cfg](double t) { return true_beta(cfg, t); };
        return out;
    }
    throw Error(ErrorCode::DegenerateDraw, "no draw with both treated and control units after 100 attempts");
}

double metric_q(const SplineCurve& est, const std::function<double(double)>& truth) {
    const std::vector<double> grid = make_grid({est.lo(), est.hi(), false}, 101);
    double q = 0.0;
    for (double t : grid) q = std::max(q, std::abs(est.eval(t) - truth(t)));
    return q;
}

AccuracyCell run_accuracy_cell(const SimConfig& cfg) {
    cfg.validate();
    const GpSampler sampler = make_sampler(cfg);
    std::vector<double> q(cfg.reps);
    parallel_for(cfg.reps, [&](std::size_t r) {
        const SimPanel sp = generate_panel(cfg, derive_seed(cfg.seed, r), sampler);
        const PointwiseEstimate est = did_estimate(two_way_transform(sp.data));
        std::vector<double> beta(est.beta.data(), est.beta.data() + est.beta.size());
        q[r] = metric_q(natural_cubic_fit(est.times, beta), sp.truth);
    });
    AccuracyCell cell;
    cell.config = cfg;
    const Moments m = moments(q);
    cell.mean = m.mean;
    cell.sd = m.sd;
    const double half = 1.96 * m.sd / std::sqrt(static_cast<double>(std::max<std::size_t>(cfg.reps, 1)));
    cell.ci_lo = m.mean - half;
    cell.ci_hi = m.mean + half;
    return cell;
}

std::vector<AccuracyCell> run_accuracy_study(const std::vector<SimConfig>& cells) {
    std::vector<AccuracyCell> out;
    out.reserve(cells.size());
    for (const auto& c : cells) out.push_back(run_accuracy_cell(c));
    return out;
}

std::string to_string(StudyBand band) {
    switch (band) {
        case StudyBand::ScbPb: return "SCB-PB";
        case StudyBand::ScbMb: return "SCB-MB";
        case StudyBand::ScbKr: return "SCB-KR";
        case StudyBand::Naive: return "Naive";
        case StudyBand::Bonferroni: return "Bonferroni";
    }
    return "Naive";
}

StudyBand parse_study_band(const std::string& s) {
    for (StudyBand b : {StudyBand::ScbPb, StudyBand::ScbMb, StudyBand::ScbKr, StudyBand::Naive, StudyBand::Bonferroni}) {
        if (to_string(b) == s) return b;
    }
    if (s == "PB" || s == "pb") return StudyBand::ScbPb;
    if (s == "MB" || s == "mb") return StudyBand::ScbMb;
    if (s == "KR" || s == "kr") return StudyBand::ScbKr;
    if (s == "naive") return StudyBand::Naive;
    if (s == "bonferroni") return StudyBand::Bonferroni;
    throw Error(ErrorCode::InvalidArgument, "unknown band label '" + s + "'");
}

namespace {

// Bands of every requested label for one simulated panel.
std::vector<Band> study_bands(const EstimateBundle& b, const std::vector<StudyBand>& labels, Side side,
                              const Domain& domain, std::size_t grid_size, double alpha, std::size_t B,
                              std::uint64_t seed) {
    const FittedCurves fit = fit_curves(b.est, b.cov);
    const std::vector<double> grid = make_grid(domain, grid_size);
    const std::size_t n = b.est.n_units;
    CritConfig cc;
    cc.side = side;
    cc.alpha = alpha;
    cc.domain = domain;
    cc.grid_size = grid_size;
    cc.B = B;
    cc.seed = seed;
    // Sup bands run at level alpha; two-sided inf bands at level 1 - 2 alpha.
    const double pw_alpha = side == Side::Sup ? alpha : 2.0 * alpha;
    std::vector<Band> out;
    for (StudyBand label : labels) {
        switch (label) {
            case StudyBand::ScbPb:
                out.push_back(build_band(fit.beta, fit.cov, crit_param_boot(b.est, b.cov, cc), grid, n));
                break;
            case StudyBand::ScbMb:
                out.push_back(build_band(fit.beta, fit.cov, crit_mult_boot(b.dp, b.est, b.cov, cc), grid, n));
                break;
            case StudyBand::ScbKr:
                out.push_back(build_band(fit.beta, fit.cov, crit_kac_rice(b.cov, cc), grid, n));
                break;
            case StudyBand::Naive: out.push_back(pointwise_band(fit.beta, fit.cov, grid, pw_alpha, n)); break;
            case StudyBand::Bonferroni:
                out.push_back(bonferroni_band(fit.beta, fit.cov, grid, pw_alpha, n, grid_size));
                break;
        }
    }
    return out;
}

PowerCurve empty_curve(const std::string& study, const std::string& effect_name, const std::vector<double>& effects,
                       const std::vector<StudyBand>& bands, std::size_t reps, double alpha) {
    PowerCurve pc;
    pc.study = study;
    pc.effect_name = effect_name;
    pc.effects = effects;
    pc.bands = bands;
    pc.reps = reps;
    pc.alpha = alpha;
    pc.rates.assign(bands.size(), std::vector<double>(effects.size(), 0.0));
    pc.se.assign(bands.size(), std::vector<double>(effects.size(), 0.0));
    return pc;
}

void fill_rates(PowerCurve& pc, const std::vector<unsigned char>& hits) {
    const std::size_t E = pc.effects.size();
    const std::size_t L = pc.bands.size();
    for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t e = 0; e < E; ++e) {
            std::size_t count = 0;
            for (std::size_t r = 0; r < pc.reps; ++r) count += hits[(e * pc.reps + r) * L + l];
            const double p = pc.reps == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(pc.reps);
            pc.rates[l][e] = p;
            pc.se[l][e] = rate_se(p, pc.reps);
        }
    }
}

}  // namespace

PowerCurve run_power_study(const PowerStudyConfig& cfg) {
    cfg.base.validate();
    if (cfg.bands.empty() || cfg.effects.empty()) throw Error(ErrorCode::InvalidArgument, "empty band or effect list");
    const GpSampler sampler = make_sampler(cfg.base);
    const std::size_t E = cfg.effects.size();
    const std::size_t L = cfg.bands.size();
    const std::size_t R = cfg.base.reps;
    PowerCurve pc = empty_curve("power", "a", cfg.effects, cfg.bands, R, cfg.alpha);

    ReferenceBand ref = ReferenceBand::trend(0.0, 0.0, 0.0, 0.0);
    if (cfg.reference == PowerReference::Trend) {
        SimConfig train = cfg.base;
        train.a = 0.0;
        const SimPanel sp = generate_panel(train, training_seed(cfg.base.seed), sampler);
        const PointwiseEstimate est = did_estimate(two_way_transform(sp.data));
        std::vector<double> beta(est.beta.data(), est.beta.data() + est.beta.size());
        const TrendStats ts = trend_stats(natural_cubic_fit(est.times, beta));
        ref = ReferenceBand::trend(cfg.m, cfg.m, ts.tr, ts.rm);
        pc.notes.push_back("reference=trend TR=" + format_real(ts.tr) + " RM=" + format_real(ts.rm) +
                           " M=" + format_real(cfg.m));
    } else {
        pc.notes.push_back("reference=zero");
    }

    const Domain domain = post_domain(cfg.base.t_post);
    const std::vector<double> grid = make_grid(domain, cfg.grid_size);
    std::vector<unsigned char> hits(E * R * L, 0);
    parallel_for(E * R, [&](std::size_t job) {
        const std::size_t e = job / R;
        const std::size_t r = job % R;
        SimConfig c = cfg.base;
        c.a = cfg.effects[e];
        const std::uint64_t seed_r = derive_seed(cfg.base.seed, r);
        const SimPanel sp = generate_panel(c, seed_r, sampler);
        const EstimateBundle b = estimate_panel(sp.data);
        const auto bands = study_bands(b, cfg.bands, Side::Sup, domain, cfg.grid_size, cfg.alpha, cfg.B,
                                       derive_seed(seed_r, 0xB007));
        for (std::size_t l = 0; l < L; ++l) {
            const Band& band = bands[l];
            bool reject = false;
            for (std::size_t k = 0; k < grid.size() && !reject; ++k) {
                reject = band.lower[k] > ref.upper(grid[k]) || band.upper[k] < ref.lower(grid[k]);
            }
            hits[job * L + l] = reject ? 1 : 0;
        }
    });
    fill_rates(pc, hits);
    return pc;
}

PowerCurve run_validation_study(const ValidationStudyConfig& cfg) {
    cfg.base.validate();
    if (cfg.bands.empty() || cfg.s_values.empty()) throw Error(ErrorCode::InvalidArgument, "empty band or S list");
    for (StudyBand b : cfg.bands) {
        if (b == StudyBand::ScbKr) throw Error(ErrorCode::InfSideUnsupported, "Kac-Rice has no inf variant");
    }
    const GpSampler sampler = make_sampler(cfg.base);
    const std::size_t E = cfg.s_values.size();
    const std::size_t L = cfg.bands.size();
    const std::size_t R = cfg.base.reps;
    PowerCurve pc = empty_curve("validation", "S", cfg.s_values, cfg.bands, R, cfg.alpha);

    const double t_a = cfg.base.t_a();
    const Domain domain = pre_domain(cfg.base.t_pre, t_a);
    const std::vector<double> grid = make_grid(domain, cfg.grid_size);
    const double center = -att_curve(cfg.base.att, cfg.base.a, 0.0, cfg.base.t_post) + 1.0;
    pc.notes.push_back("reference=constant center=" + format_real(center) + " t_A=" + format_real(t_a));

    std::vector<unsigned char> hits(E * R * L, 0);
    parallel_for(R, [&](std::size_t r) {
        const std::uint64_t seed_r = derive_seed(cfg.base.seed, r);
        const SimPanel sp = generate_panel(cfg.base, seed_r, sampler);
        const EstimateBundle b = estimate_panel(sp.data);
        const auto bands = study_bands(b, cfg.bands, Side::Inf, domain, cfg.grid_size, cfg.alpha, cfg.B,
                                       derive_seed(seed_r, 0xB007));
        for (std::size_t e = 0; e < E; ++e) {
            const double s = cfg.s_values[e];
            for (std::size_t l = 0; l < L; ++l) {
                bool inside = true;
                for (std::size_t k = 0; k < grid.size() && inside; ++k) {
                    inside = bands[l].lower[k] > center - s + 1e-12 && bands[l].upper[k] < center + s - 1e-12;
                }
                hits[(e * R + r) * L + l] = inside ? 1 : 0;
            }
        }
    });
    fill_rates(pc, hits);
    return pc;
}

}  // namespace hesp
