#include "hesp/estimate.hpp"

#include "hesp/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hesp {

namespace {

constexpr double kMinTreatmentVariation = 1e-14;

double sum_sq(const Eigen::VectorXd& v) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += v(i) * v(i);
    return s;
}

std::size_t index_of(const std::vector<double>& xs, double x) {
    for (std::size_t j = 0; j < xs.size(); ++j) {
        if (std::abs(xs[j] - x) <= 1e-9 * std::max(1.0, std::abs(x))) return j;
    }
    return xs.size();
}

}  // namespace

std::string to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::Basic: return "basic";
        case EstimatorKind::Fwl: return "fwl";
        case EstimatorKind::StaggeredGroup: return "staggered-group";
        case EstimatorKind::StaggeredAggregate: return "staggered-aggregate";
    }
    return "basic";
}

PointwiseEstimate did_estimate(const DemeanedPanel& dp) {
    const Eigen::Index n = dp.d_dot.size();
    const Eigen::Index T = dp.y_dot.cols();
    const double sdd = sum_sq(dp.d_dot);
    if (!(sdd >= kMinTreatmentVariation)) {
        throw Error(ErrorCode::NoTreatmentVariation, "all units share one treatment status");
    }
    const auto r = static_cast<Eigen::Index>(dp.ref);
    PointwiseEstimate est;
    est.times = dp.times;
    est.ref = dp.ref;
    est.n_units = static_cast<std::size_t>(n);
    est.kind = dp.residualized ? EstimatorKind::Fwl : EstimatorKind::Basic;
    est.beta = Eigen::VectorXd::Zero(T);
    for (Eigen::Index t = 0; t < T; ++t) {
        if (t == r) continue;
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) s += dp.d_dot(i) * (dp.y_dot(i, t) - dp.y_dot(i, r));
        est.beta(t) = s / sdd;
    }
    return est;
}

Eigen::MatrixXd did_residuals(const DemeanedPanel& dp, const PointwiseEstimate& est) {
    const Eigen::Index n = dp.d_dot.size();
    const Eigen::Index T = dp.y_dot.cols();
    if (est.beta.size() != T) throw Error(ErrorCode::DimensionMismatch, "estimate does not match panel");
    const auto r = static_cast<Eigen::Index>(dp.ref);
    Eigen::MatrixXd res(n, T);
    for (Eigen::Index t = 0; t < T; ++t) {
        for (Eigen::Index i = 0; i < n; ++i) {
            res(i, t) = t == r ? 0.0 : (dp.y_dot(i, t) - dp.y_dot(i, r)) - est.beta(t) * dp.d_dot(i);
        }
    }
    return res;
}

CovMatrix did_covariance(const DemeanedPanel& dp, const PointwiseEstimate& est) {
    const Eigen::Index n = dp.d_dot.size();
    const Eigen::Index T = dp.y_dot.cols();
    const double sdd = sum_sq(dp.d_dot);
    if (!(sdd >= kMinTreatmentVariation)) {
        throw Error(ErrorCode::NoTreatmentVariation, "all units share one treatment status");
    }
    const Eigen::MatrixXd res = did_residuals(dp, est);
    const double nn = static_cast<double>(n);
    const double denom = (sdd / nn) * (sdd / nn);
    const auto r = static_cast<Eigen::Index>(dp.ref);

    CovMatrix c;
    c.times = dp.times;
    c.n_units = static_cast<std::size_t>(n);
    c.cov = Eigen::MatrixXd::Zero(T, T);
    for (Eigen::Index s = 0; s < T; ++s) {
        if (s == r) continue;
        for (Eigen::Index t = s; t < T; ++t) {
            if (t == r) continue;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double d2 = dp.d_dot(i) * dp.d_dot(i);
                acc += d2 * res(i, s) * res(i, t);
            }
            c.cov(s, t) = c.cov(t, s) = (acc / nn) / denom;
        }
    }
    return c;
}

DemeanedPanel fwl_residualize(const PanelData& data) { return fwl_residualize(data, kFwlExplicitLimit); }

DemeanedPanel fwl_residualize(const PanelData& data, std::size_t explicit_limit) {
    DemeanedPanel dp = two_way_transform(data);
    dp.residualized = true;
    const Eigen::Index k = data.covariates.cols();
    if (k == 0) return dp;
    const Eigen::Index n = data.covariates.rows();

    Eigen::MatrixXd w = data.covariates;
    const Eigen::RowVectorXd w_mean = w.colwise().mean();
    w.rowwise() -= w_mean;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(w);
    qr.setThreshold(1e-10);
    if (qr.rank() < k) {
        throw Error(ErrorCode::RankDeficientCovariates,
                    "demeaned covariates have rank " + std::to_string(qr.rank()) + " < " + std::to_string(k));
    }

    const double d_norm2 = sum_sq(dp.d_dot);
    if (static_cast<std::size_t>(n) <= explicit_limit) {
        const Eigen::MatrixXd wtw = w.transpose() * w;
        const Eigen::MatrixXd proj = w * wtw.ldlt().solve(w.transpose());
        const Eigen::MatrixXd L = Eigen::MatrixXd::Identity(n, n) - proj;
        dp.d_dot = L * dp.d_dot;
        dp.y_dot = L * dp.y_dot;
    } else {
        const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, k);
        dp.d_dot -= q * (q.transpose() * dp.d_dot);
        dp.y_dot -= q * (q.transpose() * dp.y_dot);
    }

    if (sum_sq(dp.d_dot) <= 1e-20 * std::max(1.0, d_norm2) || sum_sq(dp.d_dot) < kMinTreatmentVariation) {
        throw Error(ErrorCode::ZeroResidualTreatment, "treatment is explained by the covariates");
    }
    return dp;
}

StaggeredSpec staggered_spec(const PanelData& data) {
    if (!data.staggered()) throw Error(ErrorCode::InvalidArgument, "panel has no group column");
    StaggeredSpec spec;
    std::size_t n_never = 0;
    for (double g : data.groups) {
        if (!std::isfinite(g)) {
            ++n_never;
            continue;
        }
        const auto it = std::lower_bound(spec.groups.begin(), spec.groups.end(), g);
        if (it == spec.groups.end() || *it != g) {
            spec.sizes.insert(spec.sizes.begin() + (it - spec.groups.begin()), 0);
            spec.groups.insert(it, g);
        }
        const auto pos = std::lower_bound(spec.groups.begin(), spec.groups.end(), g) - spec.groups.begin();
        ++spec.sizes[static_cast<std::size_t>(pos)];
    }
    if (n_never == 0) throw Error(ErrorCode::NoNeverTreated, "no never-treated units");
    if (spec.groups.empty()) throw Error(ErrorCode::EmptyGroup, "no treatment groups");
    const double n_treated = static_cast<double>(data.n() - n_never);
    for (std::size_t s : spec.sizes) spec.weights.push_back(static_cast<double>(s) / n_treated);
    spec.window_lo = data.times.front() - spec.groups.front();
    spec.window_hi = data.times.back() - spec.groups.back();
    for (double g : spec.groups) {
        spec.window_lo = std::max(spec.window_lo, data.times.front() - g);
        spec.window_hi = std::min(spec.window_hi, data.times.back() - g);
    }
    return spec;
}

StaggeredResult staggered_estimate(const PanelData& data, const StaggeredSpec& spec) {
    if (!data.staggered()) throw Error(ErrorCode::InvalidArgument, "panel has no group column");
    if (spec.groups.empty()) throw Error(ErrorCode::EmptyGroup, "no treatment groups");
    if (spec.sizes.size() != spec.groups.size() || spec.weights.size() != spec.groups.size()) {
        throw Error(ErrorCode::DimensionMismatch, "staggered spec vectors differ in length");
    }
    std::vector<std::size_t> never;
    for (std::size_t i = 0; i < data.n(); ++i) {
        if (!std::isfinite(data.groups[i])) never.push_back(i);
    }
    if (never.empty()) throw Error(ErrorCode::NoNeverTreated, "no never-treated units");
    const double wsum = std::accumulate(spec.weights.begin(), spec.weights.end(), 0.0);
    for (double w : spec.weights) {
        if (w < 0.0) throw Error(ErrorCode::InvalidArgument, "negative group weight");
    }
    if (std::abs(wsum - 1.0) > 1e-12) throw Error(ErrorCode::InvalidArgument, "group weights do not sum to 1");

    // Aggregate event times: the common window on the first group's event-time axis.
    std::vector<double> window;
    for (double t : data.times) {
        const double e = t - spec.groups.front();
        if (e >= spec.window_lo - 1e-9 && e <= spec.window_hi + 1e-9) window.push_back(e);
    }
    if (window.size() < 2 || spec.window_lo > spec.window_hi) {
        throw Error(ErrorCode::EmptyCommonWindow, "groups share no common event window");
    }

    StaggeredResult out;
    const auto W = static_cast<Eigen::Index>(window.size());
    out.aggregate.times = window;
    out.aggregate.ref = index_of(window, 0.0);
    out.aggregate.n_units = data.n();
    out.aggregate.kind = EstimatorKind::StaggeredAggregate;
    out.aggregate.beta = Eigen::VectorXd::Zero(W);
    out.aggregate_cov.times = window;
    out.aggregate_cov.n_units = data.n();
    out.aggregate_cov.cov = Eigen::MatrixXd::Zero(W, W);
    const double n_total = static_cast<double>(data.n());

    for (std::size_t gi = 0; gi < spec.groups.size(); ++gi) {
        const double g = spec.groups[gi];
        std::vector<std::size_t> rows;
        std::vector<double> d;
        for (std::size_t i = 0; i < data.n(); ++i) {
            if (data.groups[i] == g || !std::isfinite(data.groups[i])) {
                rows.push_back(i);
                d.push_back(data.groups[i] == g ? 1.0 : 0.0);
            }
        }
        const auto treated = static_cast<std::size_t>(std::count(d.begin(), d.end(), 1.0));
        if (treated == 0) throw Error(ErrorCode::EmptyGroup, "group " + format_real(g) + " has no units");

        DemeanedPanel dp = demean_subset(data, rows, d);
        for (double& t : dp.times) t -= g;
        dp.ref = index_of(dp.times, 0.0);
        PointwiseEstimate est = did_estimate(dp);
        est.kind = EstimatorKind::StaggeredGroup;
        est.group = g;
        CovMatrix cov = did_covariance(dp, est);

        std::vector<Eigen::Index> map(window.size());
        for (std::size_t j = 0; j < window.size(); ++j) {
            const std::size_t k = index_of(est.times, window[j]);
            if (k == est.times.size()) throw Error(ErrorCode::EmptyCommonWindow, "event time missing for a group");
            map[j] = static_cast<Eigen::Index>(k);
        }
        const double w = spec.weights[gi];
        const double scale = w * w * n_total / static_cast<double>(rows.size());
        for (Eigen::Index a = 0; a < W; ++a) {
            out.aggregate.beta(a) += w * est.beta(map[static_cast<std::size_t>(a)]);
            for (Eigen::Index b = 0; b < W; ++b) {
                out.aggregate_cov.cov(a, b) +=
                    scale * cov.cov(map[static_cast<std::size_t>(a)], map[static_cast<std::size_t>(b)]);
            }
        }
        out.group_estimates.push_back(std::move(est));
        out.group_covariances.push_back(std::move(cov));
    }
    const auto r = static_cast<Eigen::Index>(out.aggregate.ref);
    out.aggregate.beta(r) = 0.0;
    out.aggregate_cov.cov.row(r).setZero();
    out.aggregate_cov.cov.col(r).setZero();
    return out;
}

PointwiseEstimate twfe_oracle(const PanelData& data) {
    data.validate();
    const std::vector<double> d = data.treated_indicator();
    const auto n = static_cast<Eigen::Index>(data.n());
    const auto T = static_cast<Eigen::Index>(data.T());
    const auto r = static_cast<Eigen::Index>(data.ref_index());
    const double d_first = d.front();
    if (std::all_of(d.begin(), d.end(), [&](double v) { return v == d_first; })) {
        throw Error(ErrorCode::NoTreatmentVariation, "all units share one treatment status");
    }

    // Long-format design: one row per (i, t), one column per non-reference period.
    const Eigen::Index rows = n * T;
    const Eigen::Index p = T - 1;
    Eigen::VectorXd y(rows);
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(rows, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index t = 0; t < T; ++t) {
            const Eigen::Index row = i * T + t;
            y(row) = data.outcomes(i, t);
            if (t != r) x(row, t < r ? t : t - 1) = d[static_cast<std::size_t>(i)];
        }
    }

    // Two-way within transformation of every column.
    const auto within = [&](Eigen::Ref<Eigen::VectorXd> v) {
        Eigen::VectorXd unit_mean = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd time_mean = Eigen::VectorXd::Zero(T);
        double grand = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index t = 0; t < T; ++t) {
                unit_mean(i) += v(i * T + t);
                time_mean(t) += v(i * T + t);
                grand += v(i * T + t);
            }
        }
        unit_mean /= static_cast<double>(T);
        time_mean /= static_cast<double>(n);
        grand /= static_cast<double>(n * T);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index t = 0; t < T; ++t) v(i * T + t) -= unit_mean(i) + time_mean(t) - grand;
        }
    };
    within(y);
    for (Eigen::Index c = 0; c < p; ++c) within(x.col(c));

    const Eigen::MatrixXd xtx = x.transpose() * x;
    const Eigen::VectorXd xty = x.transpose() * y;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
    lu.setThreshold(1e-12);
    if (lu.rank() < p) throw Error(ErrorCode::SingularDesign, "normal equations are singular");
    const Eigen::VectorXd coef = lu.solve(xty);

    PointwiseEstimate est;
    est.times = data.times;
    est.ref = static_cast<std::size_t>(r);
    est.n_units = data.n();
    est.beta = Eigen::VectorXd::Zero(T);
    for (Eigen::Index t = 0; t < T; ++t) {
        if (t != r) est.beta(t) = coef(t < r ? t : t - 1);
    }
    return est;
}

EstimateBundle estimate_panel(const PanelData& data) {
    if (data.staggered()) throw Error(ErrorCode::InvalidArgument, "use staggered_estimate for group panels");
    EstimateBundle b;
    b.dp = data.has_covariates() ? fwl_residualize(data) : two_way_transform(data);
    b.est = did_estimate(b.dp);
    b.cov = did_covariance(b.dp, b.est);
    return b;
}

}  // namespace hesp
