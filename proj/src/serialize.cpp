#include "hesp/serialize.hpp"

#include "hesp/error.hpp"
#include "hesp/panel.hpp"

#include <cmath>
#include <optional>
#include <sstream>

namespace hesp {

Json json_real(double x) {
    if (!std::isfinite(x)) return nullptr;
    return x;
}

Json json_reals(const std::vector<double>& xs) {
    Json a = Json::array();
    for (double x : xs) a.push_back(json_real(x));
    return a;
}

Json json_reals(const Eigen::VectorXd& xs) {
    Json a = Json::array();
    for (Eigen::Index k = 0; k < xs.size(); ++k) a.push_back(json_real(xs(k)));
    return a;
}

Json to_json(const PointwiseEstimate& est) {
    Json j;
    j["kind"] = to_string(est.kind);
    j["times"] = json_reals(est.times);
    j["beta"] = json_reals(est.beta);
    j["ref"] = est.times.at(est.ref);
    j["n"] = est.n_units;
    if (est.kind == EstimatorKind::StaggeredGroup) j["group"] = json_real(est.group);
    return j;
}

Json to_json(const CovMatrix& cov) {
    Json j;
    j["times"] = json_reals(cov.times);
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < cov.cov.rows(); ++r) rows.push_back(json_reals(Eigen::VectorXd(cov.cov.row(r).transpose())));
    j["cov"] = std::move(rows);
    j["n"] = cov.n_units;
    return j;
}

Json to_json(const Domain& domain) {
    return Json{{"lo", json_real(domain.lo)}, {"hi", json_real(domain.hi)}, {"open_lo", domain.open_lo}};
}

Json to_json(const CriticalValue& crit) {
    Json j;
    j["value"] = json_real(crit.value);
    j["side"] = to_string(crit.side);
    j["alpha"] = crit.alpha;
    j["method"] = to_string(crit.method);
    j["domain"] = to_json(crit.domain);
    j["grid_size"] = crit.grid_size;
    j["seed"] = crit.seed;
    if (crit.method == CritMethod::KacRice) {
        j["df"] = json_real(crit.df);
        j["roughness"] = json_real(crit.roughness);
    } else {
        j["B"] = crit.B;
        j["clipped_fraction"] = json_real(crit.clipped_fraction);
    }
    if (!crit.warning.empty()) j["warning"] = crit.warning;
    return j;
}

Json to_json(const Band& band) {
    Json j;
    j["kind"] = to_string(band.kind);
    j["alpha"] = band.alpha;
    j["method"] = band.method ? Json(to_string(*band.method)) : Json(nullptr);
    j["crit"] = json_real(band.crit);
    j["df"] = json_real(band.df);
    j["seed"] = band.method ? Json(band.seed) : Json(nullptr);
    j["grid"] = json_reals(band.grid);
    j["estimate"] = json_reals(band.estimate);
    j["lower"] = json_reals(band.lower);
    j["upper"] = json_reals(band.upper);
    return j;
}

Json to_json(const ReferenceBand& ref) {
    Json j;
    j["kind"] = to_string(ref.kind());
    Json p;
    switch (ref.kind()) {
        case RefKind::Anticipation:
            p = Json{{"t_a", ref.t_a()},
                     {"s_l", ref.s_l()},
                     {"s_u", ref.s_u()},
                     {"center", json_real(ref.center())},
                     {"se", json_real(ref.se())}};
            break;
        case RefKind::Trend:
            p = Json{{"m_l", ref.m_l()}, {"m_u", ref.m_u()}, {"tr", json_real(ref.tr())}, {"rm", json_real(ref.rm())}};
            break;
        case RefKind::Union: {
            Json parts = Json::array();
            for (const auto& part : ref.parts()) parts.push_back(to_json(part));
            p = Json{{"parts", std::move(parts)}};
            break;
        }
    }
    j["params"] = std::move(p);
    return j;
}

Json to_json(const TestResult& test) {
    Json spans = Json::array();
    for (const auto& s : test.spans) spans.push_back(Json::array({json_real(s.lo), json_real(s.hi)}));
    Json j;
    j["test"] = test.test == TestKind::Relevance ? "relevance" : "equivalence";
    j["alpha"] = test.alpha;
    if (test.test == TestKind::Relevance) {
        j["rejected"] = test.rejected;
    } else {
        j["validated"] = test.validated();
    }
    j["spans"] = std::move(spans);
    return j;
}

Json to_json(const StaggeredSpec& spec) {
    Json j;
    j["groups"] = json_reals(spec.groups);
    j["sizes"] = spec.sizes;
    j["weights"] = json_reals(spec.weights);
    j["window"] = Json::array({json_real(spec.window_lo), json_real(spec.window_hi)});
    return j;
}

Json estimate_json(const PointwiseEstimate& est, const CovMatrix& cov) {
    return Json{{"estimate", to_json(est)}, {"covariance", to_json(cov)}};
}

Json staggered_json(const StaggeredSpec& spec, const StaggeredResult& result) {
    Json j = estimate_json(result.aggregate, result.aggregate_cov);
    j["staggered"] = to_json(spec);
    Json groups = Json::array();
    for (std::size_t g = 0; g < result.group_estimates.size(); ++g) {
        groups.push_back(estimate_json(result.group_estimates[g], result.group_covariances[g]));
    }
    j["groups"] = std::move(groups);
    return j;
}

Json report_json(const HonestEventStudy& report) {
    Json j;
    j["estimate"] = to_json(report.estimate);
    Json bands = Json::array();
    for (const auto& b : report.bands) bands.push_back(to_json(b));
    j["bands"] = std::move(bands);
    Json ref = to_json(report.refband);
    ref["grid"] = json_reals(report.refband_grid);
    ref["lower"] = json_reals(report.refband.lower(report.refband_grid));
    ref["upper"] = json_reals(report.refband.upper(report.refband_grid));
    j["refband"] = std::move(ref);
    j["relevance"] = to_json(report.relevance);
    j["equivalence"] = to_json(report.equivalence);
    const auto& c = report.config;
    Json meta;
    meta["alpha"] = c.alpha;
    meta["method"] = to_string(c.method);
    meta["inf_method"] = to_string(report.inf_method);
    meta["B"] = c.B;
    meta["seed"] = c.seed;
    meta["kac_rice_form"] = to_string(c.kac_rice_form);
    meta["post_grid"] = c.post_grid;
    meta["pre_grid"] = c.pre_grid;
    meta["n"] = report.estimate.n_units;
    meta["T"] = report.estimate.times.size();
    meta["warnings"] = report.warnings;
    j["meta"] = std::move(meta);
    return j;
}

namespace {

// Index of t in grid, if present.
std::optional<std::size_t> grid_index(const std::vector<double>& grid, double t) {
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (grid[k] == t) return k;
    }
    return std::nullopt;
}

std::string csv_real(double x) { return std::isfinite(x) ? format_real(x) : (std::isnan(x) ? "" : (x > 0 ? "inf" : "-inf")); }

bool in_spans(const std::vector<Span>& spans, double t) {
    for (const auto& s : spans) {
        if (t >= s.lo && t <= s.hi) return true;
    }
    return false;
}

}  // namespace

std::string plot_csv(const HonestEventStudy& report) {
    std::ostringstream os;
    os << "t,estimate";
    for (const auto& b : report.bands) os << ',' << to_string(b.kind) << "_lower," << to_string(b.kind) << "_upper";
    os << ",ref_lower,ref_upper,significant,violation\n";
    const FittedCurves fit = fit_curves(report.estimate, report.covariance);
    for (double t : report.refband_grid) {
        os << format_real(t) << ',' << format_real(fit.beta.eval(t));
        for (const auto& b : report.bands) {
            const auto k = grid_index(b.grid, t);
            if (k) {
                os << ',' << csv_real(b.lower[*k]) << ',' << csv_real(b.upper[*k]);
            } else {
                os << ",,";
            }
        }
        os << ',' << csv_real(report.refband.lower(t)) << ',' << csv_real(report.refband.upper(t));
        os << ',' << (in_spans(report.relevance.spans, t) ? 1 : 0);
        os << ',' << (in_spans(report.equivalence.spans, t) ? 1 : 0) << '\n';
    }
    return os.str();
}

namespace {

Json cell_json(const AccuracyCell& c) {
    Json j;
    j["att"] = to_string(c.config.att);
    j["cov"] = to_string(c.config.cov);
    j["n"] = c.config.n;
    j["T"] = c.config.T;
    j["a"] = c.config.a;
    j["sigma2"] = c.config.noise_variance();
    j["reps"] = c.config.reps;
    j["seed"] = c.config.seed;
    j["mean"] = json_real(c.mean);
    j["sd"] = json_real(c.sd);
    j["ci"] = Json::array({json_real(c.ci_lo), json_real(c.ci_hi)});
    return j;
}

}  // namespace

Json accuracy_json(const std::vector<AccuracyCell>& cells) {
    Json a = Json::array();
    for (const auto& c : cells) a.push_back(cell_json(c));
    return Json{{"study", "accuracy"}, {"cells", std::move(a)}};
}

std::string accuracy_csv(const std::vector<AccuracyCell>& cells) {
    std::ostringstream os;
    os << "att,cov,n,T,a,sigma2,reps,seed,mean,sd,ci_lo,ci_hi\n";
    for (const auto& c : cells) {
        os << to_string(c.config.att) << ',' << to_string(c.config.cov) << ',' << c.config.n << ',' << c.config.T << ','
           << format_real(c.config.a) << ',' << format_real(c.config.noise_variance()) << ',' << c.config.reps << ','
           << c.config.seed << ',' << format_real(c.mean) << ',' << format_real(c.sd) << ',' << format_real(c.ci_lo)
           << ',' << format_real(c.ci_hi) << '\n';
    }
    return os.str();
}

Json power_json(const PowerCurve& curve) {
    Json j;
    j["study"] = curve.study;
    j["effect_name"] = curve.effect_name;
    j["effects"] = json_reals(curve.effects);
    j["alpha"] = curve.alpha;
    j["reps"] = curve.reps;
    Json bands = Json::array();
    for (std::size_t l = 0; l < curve.bands.size(); ++l) {
        bands.push_back(Json{{"band", to_string(curve.bands[l])},
                             {"rates", json_reals(curve.rates[l])},
                             {"se", json_reals(curve.se[l])}});
    }
    j["bands"] = std::move(bands);
    j["notes"] = curve.notes;
    return j;
}

std::string power_csv(const PowerCurve& curve) {
    std::ostringstream os;
    os << "band," << curve.effect_name << ",rate,se\n";
    for (std::size_t l = 0; l < curve.bands.size(); ++l) {
        for (std::size_t e = 0; e < curve.effects.size(); ++e) {
            os << to_string(curve.bands[l]) << ',' << format_real(curve.effects[e]) << ','
               << format_real(curve.rates[l][e]) << ',' << format_real(curve.se[l][e]) << '\n';
        }
    }
    return os.str();
}

namespace {

template <class T>
T field(const Json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorCode::InvalidArgument, std::string("field '") + key + "' has the wrong type");
    }
}

}  // namespace

RefBandConfig refband_config_from_json(const Json& j, RefBandConfig base) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "refband must be an object");
    if (j.contains("kind")) base.kind = parse_ref_kind(field<std::string>(j, "kind", ""));
    base.t_a = field(j, "t_a", base.t_a);
    if (j.contains("s_l")) base.s_l = field<double>(j, "s_l", 0.0);
    if (j.contains("s_u")) base.s_u = field<double>(j, "s_u", 0.0);
    if (j.contains("s")) base.s_l = base.s_u = field<double>(j, "s", 0.0);
    base.m_l = field(j, "m_l", base.m_l);
    base.m_u = field(j, "m_u", base.m_u);
    if (j.contains("m")) base.m_l = base.m_u = field<double>(j, "m", 0.0);
    if (j.contains("union_of")) {
        base.union_of.clear();
        for (const auto& k : field<std::vector<std::string>>(j, "union_of", {})) base.union_of.push_back(parse_ref_kind(k));
    }
    return base;
}

ReportConfig report_config_from_json(const Json& j, ReportConfig base) {
    if (j.is_null()) return base;
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be a JSON object");
    base.alpha = field(j, "alpha", base.alpha);
    if (j.contains("method")) base.method = parse_method(field<std::string>(j, "method", ""));
    base.B = field(j, "B", base.B);
    base.seed = field(j, "seed", base.seed);
    base.post_grid = field(j, "post_grid", base.post_grid);
    base.pre_grid = field(j, "pre_grid", base.pre_grid);
    if (j.contains("kac_rice_form")) base.kac_rice_form = parse_kac_rice_form(field<std::string>(j, "kac_rice_form", ""));
    if (j.contains("refband")) base.refband = refband_config_from_json(j.at("refband"), base.refband);
    if (j.contains("equivalence_t_a")) base.equivalence_t_a = field<double>(j, "equivalence_t_a", 0.0);
    base.bonferroni = field(j, "bonferroni", base.bonferroni);
    return base;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace hesp
