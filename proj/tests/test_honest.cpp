#include "helpers.hpp"

#include "hesp/honest.hpp"
#include "hesp/serialize.hpp"
#include "hesp/stats.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace hesp;
using hesp::testing::error_code_of;
using hesp::testing::random_panel;

namespace {

Band manual_band(BandKind kind, std::vector<double> grid, std::vector<double> lower, std::vector<double> upper) {
    Band b;
    b.kind = kind;
    b.grid = std::move(grid);
    b.lower = std::move(lower);
    b.upper = std::move(upper);
    b.estimate.resize(b.grid.size());
    for (std::size_t k = 0; k < b.grid.size(); ++k) b.estimate[k] = 0.5 * (b.lower[k] + b.upper[k]);
    return b;
}

std::size_t flagged_points(const HonestEventStudy& rep) {
    std::size_t count = 0;
    for (double t : rep.bands[1].grid) {
        for (const Span& s : rep.relevance.spans) count += t >= s.lo && t <= s.hi ? 1 : 0;
    }
    return count;
}

}  // namespace

TEST_CASE("reference band shapes") {
    const ReferenceBand a = ReferenceBand::anticipation(-1.0, 2.0, 1.0, 0.5, 0.1);
    for (double t : {-5.0, 0.0, 3.0}) {
        CHECK(a.lower(t) == doctest::Approx(0.3).epsilon(1e-15));
        CHECK(a.upper(t) == doctest::Approx(0.6).epsilon(1e-15));
    }
    const ReferenceBand tr = ReferenceBand::trend(0.5, 0.5, 0.2, 0.4);
    CHECK(tr.lower(2.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(tr.upper(2.0) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(tr.lower(-2.0) == doctest::Approx(-0.8).epsilon(1e-15));
    CHECK(tr.upper(-2.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(tr.lower(0.0) == 0.0);
    CHECK(tr.upper(0.0) == 0.0);

    const ReferenceBand u = refband_union({a, tr});
    CHECK(u.kind() == RefKind::Union);
    CHECK(u.lower(2.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(u.upper(2.0) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(u.lower(-2.0) == doctest::Approx(-0.8).epsilon(1e-15));
    CHECK(u.upper(-2.0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(refband_union({a}).kind() == RefKind::Anticipation);
    CHECK(error_code_of([] { (void)refband_union({}); }) == ErrorCode::EmptyList);
    CHECK(error_code_of([] { (void)ReferenceBand::trend(-0.1, 0.5, 0.0, 1.0); }) == ErrorCode::InvalidArgument);
    CHECK(error_code_of([] { (void)ReferenceBand::anticipation(-1.0, -1.0, 1.0, 0.0, 1.0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("trend statistics") {
    std::vector<double> x, y;
    for (int t = -4; t <= 3; ++t) {
        x.push_back(t);
        y.push_back(0.3 * t);
    }
    const TrendStats lin = trend_stats(natural_cubic_fit(x, y));
    CHECK(lin.tr == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(lin.rm == doctest::Approx(0.3).epsilon(1e-12));

    const std::vector<double> zig{0.0, 1.0, 0.0, 1.0, 0.0, 0.5, 0.5, 0.5};
    const TrendStats z = trend_stats(natural_cubic_fit(x, zig));
    CHECK(std::abs(z.tr) <= 1e-12);
    CHECK(z.rm >= 1.0);

    const SplineCurve post_only = natural_cubic_fit(std::vector<double>{0.0, 1.0, 2.0}, std::vector<double>{0.0, 1.0, 2.0});
    CHECK(error_code_of([&] { (void)trend_stats(post_only); }) == ErrorCode::OutOfDomain);
}

TEST_CASE("relevance test flags disjoint grid points") {
    const ReferenceBand ref = ReferenceBand::anticipation(-1.0, 1.0, 1.0, 0.0, 0.1);
    const std::vector<double> grid{1.0, 2.0, 3.0, 4.0, 5.0};
    const Band b = manual_band(BandKind::ScbSup, grid, {0.05, 0.2, 0.3, 0.1, -0.5}, {1.0, 1.0, 1.0, 1.0, -0.2});
    const TestResult r = relevance_test(b, ref, grid);
    CHECK(r.rejected);
    CHECK(r.test == TestKind::Relevance);
    CHECK(r.spans == std::vector<Span>{{2.0, 3.0}, {5.0, 5.0}});

    const Band touching = manual_band(BandKind::ScbSup, grid, {0.1, 0.1, 0.1, 0.1, 0.1}, {1.0, 1.0, 1.0, 1.0, 1.0});
    CHECK_FALSE(relevance_test(touching, ref, grid).rejected);

    CHECK(error_code_of([&] { (void)relevance_test(b, ref, {1.0, 2.0}); }) == ErrorCode::GridMismatch);
    CHECK(error_code_of([&] { (void)relevance_test(b, ref, {1.0, 2.0, 3.0, 4.0, 5.5}); }) == ErrorCode::GridMismatch);
    const Band pw = manual_band(BandKind::Pointwise, grid, b.lower, b.upper);
    CHECK(error_code_of([&] { (void)relevance_test(pw, ref, grid); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("equivalence validation needs strict containment") {
    const ReferenceBand ref = ReferenceBand::anticipation(-1.0, 1.0, 1.0, 0.0, 0.5);
    const std::vector<double> grid{-3.0, -2.0, -1.0};
    const Band inside = manual_band(BandKind::ScbInfTwoSided, grid, {-0.4, -0.3, -0.2}, {0.4, 0.3, 0.2});
    const TestResult ok = equivalence_validate(inside, ref, grid);
    CHECK(ok.validated());
    CHECK(ok.spans.empty());

    const Band edge = manual_band(BandKind::ScbInfTwoSided, grid, {-0.4, -0.5, -0.2}, {0.4, 0.3, 0.2});
    const TestResult bad = equivalence_validate(edge, ref, grid);
    CHECK_FALSE(bad.validated());
    CHECK(bad.spans == std::vector<Span>{{-2.0, -2.0}});

    const Band upper_only = manual_band(BandKind::ScbInfTwoSided, grid, {-0.4, -0.3, -0.2}, {0.4, 0.6, 0.7});
    CHECK(equivalence_validate(upper_only, ref, grid).spans == std::vector<Span>{{-2.0, -1.0}});

    const std::vector<double> with_zero{-2.0, -1.0, 0.0};
    const Band at_zero = manual_band(BandKind::ScbInfTwoSided, with_zero, {-0.4, -0.3, 0.0}, {0.4, 0.3, 0.0});
    const ReferenceBand tight = ReferenceBand::trend(0.1, 0.1, 0.0, 1.0);
    const TestResult z = equivalence_validate(at_zero, ReferenceBand::anticipation(0.0, 1.0, 1.0, 0.0, 0.5), with_zero);
    CHECK(z.validated());
    CHECK_FALSE(equivalence_validate(at_zero, tight, with_zero).validated());
    CHECK(error_code_of([&] { (void)equivalence_validate(inside, ref, {}); }) == ErrorCode::EmptyPreAnticipationWindow);
}

TEST_CASE("grid spans") {
    const std::vector<double> g{0, 1, 2, 3, 4, 5};
    CHECK(grid_spans(g, {false, false, false, false, false, false}).empty());
    CHECK(grid_spans(g, {true, true, true, true, true, true}) == std::vector<Span>{{0, 5}});
    CHECK(grid_spans(g, {true, false, true, true, false, true}) == std::vector<Span>{{0, 0}, {2, 3}, {5, 5}});
}

TEST_CASE("report structure") {
    const PanelData p = random_panel(120, 5, 5, 31);
    ReportConfig cfg;
    cfg.B = 500;
    cfg.bonferroni = true;
    const HonestEventStudy rep = honest_report(p, cfg);
    REQUIRE(rep.bands.size() == 4);
    CHECK(rep.bands[0].kind == BandKind::Pointwise);
    CHECK(rep.bands[1].kind == BandKind::Bonferroni);
    CHECK(rep.bands[2].kind == BandKind::ScbSup);
    CHECK(rep.bands[3].kind == BandKind::ScbInfTwoSided);
    for (const Band& b : rep.bands) CHECK(b.alpha == 0.05);
    CHECK(rep.bands[2].grid.size() == kDefaultPostGrid);
    CHECK(rep.bands[3].grid.size() == kDefaultPreGrid);
    CHECK(rep.bands[3].grid.front() == -5.0);
    CHECK(rep.bands[3].grid.back() == -1.0);
    CHECK(rep.refband.kind() == RefKind::Anticipation);
    CHECK(rep.refband.s_l() == doctest::Approx(t_quantile(0.975, 119.0)).epsilon(1e-15));
    CHECK(rep.refband_grid.front() == -5.0);
    CHECK(rep.refband_grid.back() == 5.0);
    CHECK(rep.relevance.test == TestKind::Relevance);
    CHECK(rep.equivalence.test == TestKind::Equivalence);

    ReportConfig kr = cfg;
    kr.method = CritMethod::KacRice;
    const HonestEventStudy rk = honest_report(p, kr);
    CHECK(rk.bands[2].method == CritMethod::KacRice);
    CHECK(rk.inf_method == CritMethod::ParamBoot);
    CHECK(rk.bands[3].method == CritMethod::ParamBoot);

    const Json j = report_json(rep);
    CHECK(j.contains("estimate"));
    CHECK(j.at("bands").size() == 4);
    CHECK(j.at("refband").at("kind") == "anticipation");
    CHECK(j.at("meta").at("alpha") == 0.05);
    CHECK(Json::parse(j.dump()) == j);
}

TEST_CASE("report configuration from JSON") {
    const Json j = Json::parse(R"({"alpha": 0.1, "method": "kac-rice", "B": 250, "seed": 9, "post_grid": 40,
        "pre_grid": 41, "kac_rice_form": "printed", "bonferroni": true, "equivalence_t_a": -2,
        "refband": {"kind": "union", "t_a": -2, "s": 1.5, "m": 0.25, "union_of": ["anticipation", "trend"]}})");
    const ReportConfig c = report_config_from_json(j);
    CHECK(c.alpha == 0.1);
    CHECK(c.method == CritMethod::KacRice);
    CHECK(c.B == 250);
    CHECK(c.seed == 9);
    CHECK(c.post_grid == 40);
    CHECK(c.pre_grid == 41);
    CHECK(c.kac_rice_form == KacRiceForm::Printed);
    CHECK(c.bonferroni);
    CHECK(c.equivalence_t_a == -2.0);
    CHECK(c.refband.kind == RefKind::Union);
    CHECK(c.refband.t_a == -2.0);
    CHECK(c.refband.s_l == 1.5);
    CHECK(c.refband.s_u == 1.5);
    CHECK(c.refband.m_l == 0.25);
    CHECK(c.refband.m_u == 0.25);
    CHECK(c.refband.union_of == std::vector<RefKind>{RefKind::Anticipation, RefKind::Trend});

    const ReportConfig d = report_config_from_json(Json::object());
    CHECK(d.alpha == 0.05);
    CHECK(d.method == CritMethod::ParamBoot);
    CHECK(error_code_of([] { (void)report_config_from_json(Json::parse(R"({"alpha": "x"})")); }) == ErrorCode::InvalidArgument);
    CHECK(error_code_of([] { (void)report_config_from_json(Json::parse(R"({"method": "x"})")); }) == ErrorCode::InvalidArgument);
    CHECK(error_code_of([] { (void)report_config_from_json(Json::parse("[1]")); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("wider reference bands reject less and validate more") {
    PanelData p = random_panel(150, 5, 5, 41);
    for (Eigen::Index i = 0; i < p.outcomes.rows(); ++i) {
        if (p.treatment[static_cast<std::size_t>(i)] == 1.0) {
            for (Eigen::Index t = 6; t < p.outcomes.cols(); ++t) p.outcomes(i, t) += 0.2 * static_cast<double>(t - 5);
        }
    }
    ReportConfig cfg;
    cfg.B = 500;
    std::size_t prev_rel = std::numeric_limits<std::size_t>::max();
    bool prev_valid = false;
    for (double s : {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
        cfg.refband.s_l = cfg.refband.s_u = s;
        const HonestEventStudy rep = honest_report(p, cfg);
        const std::size_t rel = flagged_points(rep);
        CHECK(rel <= prev_rel);
        if (prev_valid) CHECK(rep.equivalence.validated());
        prev_rel = rel;
        prev_valid = rep.equivalence.validated();
    }
    CHECK(prev_valid);

    cfg.refband = {};
    cfg.refband.kind = RefKind::Trend;
    prev_rel = std::numeric_limits<std::size_t>::max();
    for (double m : {0.0, 0.5, 1.0, 2.0}) {
        cfg.refband.m_l = cfg.refband.m_u = m;
        const std::size_t rel = flagged_points(honest_report(p, cfg));
        CHECK(rel <= prev_rel);
        prev_rel = rel;
    }
}

TEST_CASE("a linear trend in treated outcomes shifts every band") {
    const PanelData p = random_panel(100, 4, 4, 51);
    PanelData q = p;
    const double c = 0.7;
    for (Eigen::Index i = 0; i < q.outcomes.rows(); ++i) {
        for (Eigen::Index t = 0; t < q.outcomes.cols(); ++t) {
            q.outcomes(i, t) += c * q.times[static_cast<std::size_t>(t)] * q.treatment[static_cast<std::size_t>(i)];
        }
    }
    ReportConfig cfg;
    cfg.B = 400;
    const HonestEventStudy a = honest_report(p, cfg);
    const HonestEventStudy b = honest_report(q, cfg);
    CHECK((a.covariance.cov - b.covariance.cov).cwiseAbs().maxCoeff() <= 1e-10);
    for (std::size_t j = 0; j < a.bands.size(); ++j) {
        CHECK(a.bands[j].crit == doctest::Approx(b.bands[j].crit).epsilon(1e-9));
        for (std::size_t k = 0; k < a.bands[j].grid.size(); ++k) {
            const double shift = c * a.bands[j].grid[k];
            CHECK(b.bands[j].lower[k] - a.bands[j].lower[k] == doctest::Approx(shift).epsilon(1e-9));
            CHECK(b.bands[j].upper[k] - a.bands[j].upper[k] == doctest::Approx(shift).epsilon(1e-9));
        }
    }
    CHECK(b.refband.center() - a.refband.center() == doctest::Approx(c * -1.0).epsilon(1e-9));
}

TEST_CASE("staggered panels use the aggregate") {
    PanelData p = random_panel(30, 4, 4, 61);
    p.groups.clear();
    for (std::size_t i = 0; i < p.n(); ++i) p.groups.push_back(i % 3 == 0 ? 0.0 : (i % 3 == 1 ? 1.0 : kNeverTreated));
    p.treatment.clear();
    ReportConfig cfg;
    cfg.B = 300;
    const HonestEventStudy rep = honest_report(p, cfg);
    CHECK(rep.estimate.kind == EstimatorKind::StaggeredAggregate);
    CHECK(rep.estimate.times.front() == -4.0);
    CHECK(rep.estimate.times.back() == 3.0);
    cfg.method = CritMethod::MultBoot;
    CHECK(error_code_of([&] { (void)honest_report(p, cfg); }) == ErrorCode::InvalidArgument);
}
