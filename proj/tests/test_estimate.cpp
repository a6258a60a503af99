#include "helpers.hpp"

#include "hesp/estimate.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace hesp;
using hesp::testing::error_code_of;
using hesp::testing::hand_panel;
using hesp::testing::random_panel;

namespace {

EstimateBundle basic(const PanelData& p) { return estimate_panel(p); }

/// Variance of the difference in mean changes, scaled by n, written out
/// per unit from the residual definition.
double hand_variance(const PanelData& p, std::size_t t) {
    const std::size_t r = p.ref_index();
    const std::size_t n = p.n();
    double d_bar = 0.0;
    for (double d : p.treatment) d_bar += d;
    d_bar /= static_cast<double>(n);
    std::vector<double> delta(n);
    double delta_bar = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        delta[i] = p.outcomes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) -
                   p.outcomes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r));
        delta_bar += delta[i];
    }
    delta_bar /= static_cast<double>(n);
    double sdd = 0.0, sdy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dd = p.treatment[i] - d_bar;
        sdd += dd * dd;
        sdy += dd * (delta[i] - delta_bar);
    }
    const double beta = sdy / sdd;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dd = p.treatment[i] - d_bar;
        const double e = (delta[i] - delta_bar) - beta * dd;
        acc += dd * dd * e * e;
    }
    const double nn = static_cast<double>(n);
    return (acc / nn) / ((sdd / nn) * (sdd / nn));
}

}  // namespace

TEST_CASE("hand panel estimate and covariance") {
    EstimateBundle b = basic(hand_panel());
    CHECK(b.est.kind == EstimatorKind::Basic);
    CHECK(b.est.ref == 1);
    CHECK(b.est.beta(1) == 0.0);
    CHECK(b.est.beta(2) == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(std::abs(b.cov.cov(2, 2)) <= 1e-14);

    const PanelData p = hand_panel(4.5);
    b = basic(p);
    CHECK(b.est.beta(2) == doctest::Approx(1.75).epsilon(1e-14));
    CHECK(b.cov.cov(2, 2) == doctest::Approx(0.125).epsilon(1e-12));
    CHECK(b.cov.cov(2, 2) == doctest::Approx(hand_variance(p, 2)).epsilon(1e-12));
    CHECK(b.cov.cov(0, 0) == doctest::Approx(hand_variance(p, 0)).epsilon(1e-12));
}

TEST_CASE("covariance has a zero reference row and is symmetric PSD") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const PanelData p = random_panel(30, 4, 5, seed);
        const EstimateBundle b = basic(p);
        const auto r = static_cast<Eigen::Index>(b.est.ref);
        CHECK(b.cov.cov.row(r).cwiseAbs().maxCoeff() == 0.0);
        CHECK(b.cov.cov.col(r).cwiseAbs().maxCoeff() == 0.0);
        CHECK((b.cov.cov - b.cov.cov.transpose()).cwiseAbs().maxCoeff() == 0.0);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b.cov.cov);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10 * es.eigenvalues().maxCoeff());
        for (std::size_t t = 0; t < p.T(); ++t) {
            const auto ti = static_cast<Eigen::Index>(t);
            CHECK(b.cov.cov(ti, ti) == doctest::Approx(hand_variance(p, t)).epsilon(1e-10));
        }
    }
}

TEST_CASE("estimator invariances") {
    const PanelData p = random_panel(25, 3, 4, 7);
    const EstimateBundle b = basic(p);

    PanelData shifted = p;
    shifted.outcomes.array() += 17.5;
    const EstimateBundle bs = basic(shifted);
    CHECK((bs.est.beta - b.est.beta).cwiseAbs().maxCoeff() <= 1e-12);

    PanelData scaled = p;
    scaled.outcomes *= 3.0;
    const EstimateBundle bc = basic(scaled);
    CHECK((bc.est.beta - 3.0 * b.est.beta).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((bc.cov.cov - 9.0 * b.cov.cov).cwiseAbs().maxCoeff() <= 1e-10 * b.cov.cov.cwiseAbs().maxCoeff());

    PanelData flipped = p;
    for (double& d : flipped.treatment) d = 1.0 - d;
    const EstimateBundle bf = basic(flipped);
    CHECK((bf.est.beta + b.est.beta).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((bf.cov.cov - b.cov.cov).cwiseAbs().maxCoeff() <= 1e-10 * b.cov.cov.cwiseAbs().maxCoeff());
}

TEST_CASE("no treatment variation is a numerical failure") {
    PanelData p = hand_panel();
    DemeanedPanel dp = two_way_transform(p);
    dp.d_dot.setZero();
    const ErrorCode code = error_code_of([&] { (void)did_estimate(dp); });
    CHECK(code == ErrorCode::NoTreatmentVariation);
    CHECK(is_numerical(code));
}

TEST_CASE("basic estimator equals the two-way fixed-effects regression") {
    CounterRng rng(2024, 0);
    for (int rep = 0; rep < 50; ++rep) {
        const auto n = static_cast<std::size_t>(6 + rng.uniform() * 15);
        const int T = 3 + static_cast<int>(rng.uniform() * 5);
        const int t_pre = 1 + static_cast<int>(rng.uniform() * (T - 2));
        const PanelData p = random_panel(n, t_pre, T - 1 - t_pre, 100 + static_cast<std::uint64_t>(rep));
        const PointwiseEstimate a = did_estimate(two_way_transform(p));
        const PointwiseEstimate o = twfe_oracle(p);
        CHECK((a.beta - o.beta).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("covariate adjustment") {
    SUBCASE("covariates orthogonal to treatment leave the estimate unchanged") {
        PanelData p = random_panel(20, 3, 3, 9, 1);
        for (std::size_t i = 0; i < p.n(); ++i) p.covariates(static_cast<Eigen::Index>(i), 0) = (i / 2) % 2 == 0 ? 1.0 : -1.0;
        PanelData bare = p;
        bare.covariates.resize(static_cast<Eigen::Index>(p.n()), 0);
        bare.covariate_names.clear();
        const EstimateBundle with = estimate_panel(p);
        const EstimateBundle without = estimate_panel(bare);
        CHECK(with.est.kind == EstimatorKind::Fwl);
        CHECK((with.est.beta - without.est.beta).cwiseAbs().maxCoeff() <= 1e-10);
    }
    SUBCASE("residualized treatment is orthogonal to the covariates") {
        const PanelData p = random_panel(40, 3, 3, 10, 3);
        const DemeanedPanel dp = fwl_residualize(p);
        CHECK(dp.residualized);
        Eigen::MatrixXd w = p.covariates;
        w.rowwise() -= w.colwise().mean();
        CHECK((w.transpose() * dp.d_dot).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((w.transpose() * dp.y_dot).cwiseAbs().maxCoeff() <= 1e-9);
    }
    SUBCASE("QR path matches the explicit projector") {
        const PanelData p = random_panel(40, 2, 3, 11, 2);
        const DemeanedPanel a = fwl_residualize(p);
        const DemeanedPanel q = fwl_residualize(p, 0);
        CHECK((a.d_dot - q.d_dot).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((a.y_dot - q.y_dot).cwiseAbs().maxCoeff() <= 1e-11);
    }
    SUBCASE("rank-deficient covariates") {
        PanelData p = random_panel(20, 2, 2, 12, 2);
        p.covariates.col(1) = 2.0 * p.covariates.col(0);
        CHECK(error_code_of([&] { (void)fwl_residualize(p); }) == ErrorCode::RankDeficientCovariates);
    }
    SUBCASE("treatment explained by covariates") {
        PanelData p = random_panel(20, 2, 2, 13, 1);
        for (std::size_t i = 0; i < p.n(); ++i) p.covariates(static_cast<Eigen::Index>(i), 0) = p.treatment[i];
        CHECK(error_code_of([&] { (void)fwl_residualize(p); }) == ErrorCode::ZeroResidualTreatment);
    }
}

namespace {

/// Units 0..n-1 with deterministic outcomes: common path plus unit level
/// plus h(t - G_i) for treated units.
PanelData staggered_panel(const std::vector<double>& groups, int t_lo, int t_hi, std::uint64_t seed, double noise) {
    PanelData p;
    CounterRng rng(seed, 0);
    for (int t = t_lo; t <= t_hi; ++t) p.times.push_back(t);
    p.groups = groups;
    const auto n = static_cast<Eigen::Index>(groups.size());
    p.outcomes.resize(n, static_cast<Eigen::Index>(p.times.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        p.unit_ids.push_back(std::to_string(i + 1));
        const double level = rng.normal();
        for (std::size_t j = 0; j < p.times.size(); ++j) {
            const double t = p.times[j];
            const double g = groups[static_cast<std::size_t>(i)];
            const double e = t - g;
            const double h = std::isfinite(g) && e > 0 ? std::sqrt(e) : 0.0;
            p.outcomes(i, static_cast<Eigen::Index>(j)) = level + 0.2 * t + h + noise * rng.normal();
        }
    }
    return p;
}

}  // namespace

TEST_CASE("staggered aggregation") {
    SUBCASE("one group reduces to the basic estimator") {
        const PanelData basic_p = random_panel(16, 3, 3, 21);
        PanelData p = basic_p;
        p.groups.clear();
        for (double d : basic_p.treatment) p.groups.push_back(d == 1.0 ? 0.0 : kNeverTreated);
        p.treatment.clear();
        const StaggeredSpec spec = staggered_spec(p);
        CHECK(spec.groups == std::vector<double>{0.0});
        CHECK(spec.weights == std::vector<double>{1.0});
        const StaggeredResult s = staggered_estimate(p, spec);
        const EstimateBundle b = estimate_panel(basic_p);
        CHECK(s.aggregate.kind == EstimatorKind::StaggeredAggregate);
        CHECK((s.aggregate.beta - b.est.beta).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((s.aggregate_cov.cov - b.cov.cov).cwiseAbs().maxCoeff() <= 1e-12);
    }
    SUBCASE("weights and window") {
        const std::vector<double> g = {0, 0, 0, 1, 1, 2, kNeverTreated, kNeverTreated, kNeverTreated, kNeverTreated};
        const PanelData p = staggered_panel(g, -3, 5, 3, 0.5);
        const StaggeredSpec spec = staggered_spec(p);
        CHECK(spec.groups == std::vector<double>{0, 1, 2});
        CHECK(spec.sizes == std::vector<std::size_t>{3, 2, 1});
        CHECK(std::accumulate(spec.weights.begin(), spec.weights.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(spec.window_lo == -3.0);
        CHECK(spec.window_hi == 3.0);
        const StaggeredResult s = staggered_estimate(p, spec);
        CHECK(s.aggregate.times.front() == -3.0);
        CHECK(s.aggregate.times.back() == 3.0);
        CHECK(s.aggregate.beta(static_cast<Eigen::Index>(s.aggregate.ref)) == 0.0);
        CHECK(s.group_estimates.size() == 3);
    }
    SUBCASE("identical event-time curves aggregate exactly") {
        const std::vector<double> g = {0, 0, 1, 1, 2, 2, kNeverTreated, kNeverTreated, kNeverTreated};
        const PanelData p = staggered_panel(g, -2, 6, 4, 0.0);
        const StaggeredResult s = staggered_estimate(p, staggered_spec(p));
        for (std::size_t a = 0; a < s.aggregate.times.size(); ++a) {
            const double e = s.aggregate.times[a];
            CHECK(s.aggregate.beta(static_cast<Eigen::Index>(a)) == doctest::Approx(e > 0 ? std::sqrt(e) : 0.0).epsilon(1e-12));
        }
    }
    SUBCASE("errors") {
        const PanelData none = staggered_panel({0, 0, 1, 1}, -2, 3, 5, 1.0);
        CHECK(error_code_of([&] { (void)staggered_spec(none); }) == ErrorCode::NoNeverTreated);
        const PanelData far = staggered_panel({-2, 3, kNeverTreated, kNeverTreated}, -2, 3, 5, 1.0);
        CHECK(error_code_of([&] { (void)staggered_estimate(far, staggered_spec(far)); }) == ErrorCode::EmptyCommonWindow);
        CHECK(error_code_of([&] { (void)estimate_panel(far); }) == ErrorCode::InvalidArgument);
    }
}
