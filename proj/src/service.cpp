#include "hesp/service.hpp"

#include "hesp/commands.hpp"
#include "hesp/error.hpp"
#include "hesp/honest.hpp"
#include "hesp/serialize.hpp"

#include <httplib.h>

#include <regex>
#include <sstream>

namespace hesp {

std::shared_ptr<const Dataset> DatasetStore::add(PanelData data) {
    auto ds = std::make_shared<Dataset>();
    if (data.staggered()) {
        const StaggeredSpec spec = staggered_spec(data);
        StaggeredResult s = staggered_estimate(data, spec);
        ds->estimate_json = dump(staggered_json(spec, s));
        ds->est = std::move(s.aggregate);
        ds->cov = std::move(s.aggregate_cov);
    } else {
        EstimateBundle b = estimate_panel(data);
        ds->estimate_json = dump(estimate_json(b.est, b.cov));
        ds->est = std::move(b.est);
        ds->cov = std::move(b.cov);
        ds->dp = std::move(b.dp);
    }
    ds->data = std::move(data);
    std::lock_guard lock(mutex_);
    ds->id = "ds" + std::to_string(next_++);
    items_.emplace(ds->id, ds);
    return ds;
}

std::shared_ptr<const Dataset> DatasetStore::get(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const auto it = items_.find(id);
    return it == items_.end() ? nullptr : it->second;
}

std::size_t DatasetStore::size() const {
    std::lock_guard lock(mutex_);
    return items_.size();
}

namespace {

HttpResponse json_response(int status, const Json& j) { return {status, j.dump() + "\n"}; }

HttpResponse error_response(int status, const std::string& code, const std::string& message) {
    return json_response(status, Json{{"error", code}, {"message", message}});
}

std::string query_value(const std::multimap<std::string, std::string>& q, const std::string& key,
                        const std::string& fallback) {
    const auto it = q.find(key);
    return it == q.end() ? fallback : it->second;
}

CsvSchema schema_from_query(const std::multimap<std::string, std::string>& q) {
    CsvSchema s;
    s.unit = query_value(q, "unit", s.unit);
    s.time = query_value(q, "time", s.time);
    s.outcome = query_value(q, "outcome", s.outcome);
    s.treat = query_value(q, "treat", s.treat);
    s.group = query_value(q, "group", s.group);
    const std::string cov = query_value(q, "covariates", "");
    std::stringstream ss(cov);
    for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) s.covariates.push_back(item);
    }
    return s;
}

Json parse_body(const std::string& body) {
    if (body.empty()) return Json::object();
    try {
        return Json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed JSON body: ") + e.what());
    }
}

Json bands_response(const Dataset& ds, const Json& req) {
    if (!req.is_object()) throw Error(ErrorCode::InvalidArgument, "request body must be a JSON object");
    const auto get_or = [&](const char* key, auto fallback) {
        using T = decltype(fallback);
        if (!req.contains(key) || req.at(key).is_null()) return fallback;
        try {
            return req.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw Error(ErrorCode::InvalidArgument, std::string("field '") + key + "' has the wrong type");
        }
    };
    const std::string band = get_or("band", std::string("scb"));
    CritConfig cc;
    cc.side = parse_side(get_or("side", std::string("sup")));
    cc.alpha = get_or("alpha", 0.05);
    cc.B = get_or("B", kDefaultReplicates);
    cc.seed = get_or("seed", std::uint64_t{1});
    cc.kac_rice_form = parse_kac_rice_form(get_or("kac_rice_form", std::string("corrected")));
    const double t_a = get_or("t_a", -1.0);
    if (cc.side == Side::Sup) {
        cc.domain = post_domain(ds.est.times.back());
        cc.grid_size = get_or("grid_size", kDefaultPostGrid);
    } else {
        cc.domain = pre_domain(-ds.est.times.front(), t_a);
        cc.grid_size = get_or("grid_size", kDefaultPreGrid);
    }
    const FittedCurves fit = fit_curves(ds.est, ds.cov);
    const std::vector<double> grid = make_grid(cc.domain, cc.grid_size);
    const std::size_t n = ds.est.n_units;
    Json out;
    if (band == "pointwise") {
        out["band"] = to_json(pointwise_band(fit.beta, fit.cov, grid, cc.alpha, n));
        return out;
    }
    if (band == "bonferroni") {
        out["band"] = to_json(bonferroni_band(fit.beta, fit.cov, grid, cc.alpha, n));
        return out;
    }
    if (band != "scb") throw Error(ErrorCode::InvalidArgument, "band must be scb, pointwise or bonferroni");
    const CritMethod method = parse_method(get_or("method", std::string("pb")));
    CriticalValue crit;
    switch (method) {
        case CritMethod::ParamBoot: crit = crit_param_boot(ds.est, ds.cov, cc); break;
        case CritMethod::MultBoot:
            if (!ds.dp) throw Error(ErrorCode::InvalidArgument, "multiplier bootstrap is not available for staggered aggregates");
            crit = crit_mult_boot(*ds.dp, ds.est, ds.cov, cc);
            break;
        case CritMethod::KacRice: crit = crit_kac_rice(ds.cov, cc); break;
    }
    std::optional<BandKind> kind;
    if (req.contains("kind")) kind = parse_band_kind(get_or("kind", std::string()));
    out["band"] = to_json(build_band(fit.beta, fit.cov, crit, grid, n, kind));
    out["crit"] = to_json(crit);
    return out;
}

}  // namespace

Service::Service() = default;

Service::~Service() { stop(); }

HttpResponse Service::handle(const std::string& method, const std::string& path,
                             const std::multimap<std::string, std::string>& query, const std::string& body) {
    static const std::regex dataset_re(R"(^/datasets/([A-Za-z0-9_-]+)/(estimate|bands|test)$)");
    try {
        if (path == "/health") {
            if (method != "GET") return error_response(405, "MethodNotAllowed", "use GET");
            return json_response(200, Json{{"status", "ok"}});
        }
        if (path == "/datasets") {
            if (method != "POST") return error_response(405, "MethodNotAllowed", "use POST");
            const auto ds = store_.add(parse_csv(body, schema_from_query(query)));
            return json_response(201, Json{{"id", ds->id},
                                           {"n", ds->data.n()},
                                           {"T", ds->data.T()},
                                           {"staggered", ds->data.staggered()},
                                           {"covariates", ds->data.covariate_names}});
        }
        std::smatch m;
        if (!std::regex_match(path, m, dataset_re)) return error_response(404, "NotFound", "no route for " + path);
        const auto ds = store_.get(m[1].str());
        if (!ds) return error_response(404, "UnknownDataset", "unknown dataset id '" + m[1].str() + "'");
        const std::string action = m[2].str();
        if (action == "estimate") {
            if (method != "GET") return error_response(405, "MethodNotAllowed", "use GET");
            return {200, ds->estimate_json};
        }
        if (method != "POST") return error_response(405, "MethodNotAllowed", "use POST");
        const Json req = parse_body(body);
        if (action == "bands") return json_response(200, bands_response(*ds, req));
        const ReportConfig cfg = report_config_from_json(req);
        const DemeanedPanel* dp = ds->dp ? &*ds->dp : nullptr;
        if (!dp && cfg.method == CritMethod::MultBoot) {
            throw Error(ErrorCode::InvalidArgument, "multiplier bootstrap is not available for staggered aggregates");
        }
        return json_response(200, report_json(honest_report(dp, ds->est, ds->cov, cfg)));
    } catch (const Error& e) {
        return error_response(e.numerical() ? 422 : 400, std::string(to_string(e.code())), e.what());
    } catch (const std::exception& e) {
        return error_response(500, "Internal", e.what());
    }
}

void Service::mount() {
    server_ = std::make_unique<httplib::Server>();
    server_->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    const auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
        const HttpResponse r = handle(req.method, req.path, req.params, req.body);
        res.status = r.status;
        res.set_content(r.body, "application/json");
    };
    server_->Get(".*", dispatch);
    server_->Post(".*", dispatch);
    server_->Options(".*", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });
}

int Service::start(const std::string& host, int port) {
    mount();
    const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::InvalidArgument, "cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return bound;
}

void Service::run(const std::string& host, int port) {
    mount();
    if (!server_->listen(host, port)) throw Error(ErrorCode::InvalidArgument, "cannot listen on " + host + ":" + std::to_string(port));
}

void Service::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

}  // namespace hesp
