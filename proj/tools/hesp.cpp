#include "hesp/commands.hpp"
#include "hesp/error.hpp"
#include "hesp/parallel.hpp"
#include "hesp/service.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>

namespace {

using namespace hesp;

struct SchemaArgs {
    std::string unit = "unit";
    std::string time = "time";
    std::string outcome = "outcome";
    std::string treat = "treat";
    std::string group;
    std::vector<std::string> covariates;

    void add(CLI::App* app) {
        app->add_option("--unit", unit, "Unit id column")->capture_default_str();
        app->add_option("--time", time, "Event time column")->capture_default_str();
        app->add_option("--outcome", outcome, "Outcome column")->capture_default_str();
        app->add_option("--treat", treat, "Binary treatment column")->capture_default_str();
        app->add_option("--group", group, "Staggered group column (reference period, empty or inf for never treated)");
        app->add_option("--covariates", covariates, "Time-invariant covariate columns")->delimiter(',');
    }

    [[nodiscard]] CsvSchema schema() const { return {unit, time, outcome, treat, group, covariates}; }
};

struct SimArgs {
    std::string att = "ATT1";
    std::string cov = "Cov1";
    std::vector<std::size_t> n = {100};
    std::vector<std::size_t> t = {11};
    double a = 1.0;
    std::string bias = "none";
    double dt_slope = 0.4;
    std::optional<double> sigma2;
    std::size_t reps = 500;

    void add(CLI::App* app) {
        app->add_option("--att", att, "ATT1, ATT2, ATT1* or ATT2*")->capture_default_str();
        app->add_option("--cov", cov, "Cov1 or Cov2")->capture_default_str();
        app->add_option("--n", n, "Units per panel")->delimiter(',')->capture_default_str();
        app->add_option("--t", t, "Time points per panel (odd)")->delimiter(',')->capture_default_str();
        app->add_option("--a", a, "Effect scale")->capture_default_str();
        app->add_option("--bias", bias, "none or dt (differential trend)")->capture_default_str();
        app->add_option("--dt-slope", dt_slope, "Slope of the differential trend under --bias dt")->capture_default_str();
        app->add_option("--sigma2", sigma2, "Error process variance (default 4)");
        app->add_option("--reps", reps, "Monte Carlo replicates")->capture_default_str();
    }

    [[nodiscard]] SimConfig config(std::size_t n_units, std::size_t T, std::uint64_t seed) const {
        SimConfig c;
        c.att = parse_att(att);
        c.cov = parse_cov(cov);
        c.n = n_units;
        c.T = T;
        c.a = a;
        if (bias == "dt") {
            c.dt_slope = dt_slope;
        } else if (bias != "none") {
            throw Error(ErrorCode::InvalidArgument, "bias must be none or dt, got '" + bias + "'");
        }
        c.sigma2 = sigma2;
        c.reps = reps;
        c.seed = seed;
        return c;
    }

    [[nodiscard]] SimConfig single(std::uint64_t seed) const {
        if (n.size() != 1 || t.size() != 1) throw Error(ErrorCode::InvalidArgument, "power and validation take one n and one t");
        return config(n.front(), t.front(), seed);
    }
};

int emit(const CommandResult& r, const std::string& output, const std::string& plot_path) {
    if (r.exit_code != kExitOk) {
        std::cerr << "error: " << r.error << '\n';
        return r.exit_code;
    }
    if (output.empty() || output == "-") {
        std::cout << r.output;
    } else {
        std::ofstream f(output, std::ios::binary);
        if (!(f << r.output)) {
            std::cerr << "error: cannot write " << output << '\n';
            return kExitValidation;
        }
    }
    if (!plot_path.empty()) {
        std::ofstream f(plot_path, std::ios::binary);
        if (!(f << r.plot)) {
            std::cerr << "error: cannot write " << plot_path << '\n';
            return kExitValidation;
        }
    }
    return kExitOk;
}

Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Honest event-study inference for functional difference-in-differences"};
    app.set_config("--config", "", "key=value configuration file mirroring the flags");
    app.require_subcommand(1);
    std::size_t threads = 0;
    app.add_option("--threads", threads, "Worker threads (0: HONEST_ESP_THREADS or hardware)");

    std::string output;
    std::string format = "json";
    std::uint64_t seed = 1;

    auto* est = app.add_subcommand("estimate", "Pointwise DiD estimates and covariance");
    SchemaArgs est_schema;
    std::string est_input;
    est->add_option("--input", est_input, "Long-format panel CSV")->required();
    est_schema.add(est);
    est->add_option("--format", format, "json or csv")->capture_default_str();
    est->add_option("--output,-o", output, "Output path (default stdout)");

    auto* rep = app.add_subcommand("report", "Honest event study: bands, reference band and tests");
    SchemaArgs rep_schema;
    std::string rep_input;
    std::string plot_path;
    double alpha = 0.05;
    std::string method = "pb";
    std::size_t B = kDefaultReplicates;
    std::size_t post_grid = kDefaultPostGrid;
    std::size_t pre_grid = kDefaultPreGrid;
    std::string kr_form = "corrected";
    std::string ref_kind = "anticipation";
    double t_a = -1.0;
    std::optional<double> s_l, s_u, s_both, eq_t_a;
    double m_l = 0.5, m_u = 0.5;
    std::optional<double> m_both;
    std::vector<std::string> union_of = {"anticipation", "trend"};
    bool bonferroni = false;
    rep->add_option("--input", rep_input, "Long-format panel CSV")->required();
    rep_schema.add(rep);
    rep->add_option("--alpha", alpha, "Significance level in (0, 0.5)")->capture_default_str();
    rep->add_option("--method", method, "Critical value method: pb, mb or kr")->capture_default_str();
    rep->add_option("--B", B, "Bootstrap replicates (>= 100)")->capture_default_str();
    rep->add_option("--seed", seed, "Random seed")->capture_default_str();
    rep->add_option("--post-grid", post_grid, "Grid points on (0, T_post]")->capture_default_str();
    rep->add_option("--pre-grid", pre_grid, "Grid points on [-T_pre, t_A]")->capture_default_str();
    rep->add_option("--kac-rice-form", kr_form, "corrected or printed")->capture_default_str();
    rep->add_option("--refband", ref_kind, "anticipation, trend or union")->capture_default_str();
    rep->add_option("--t-a", t_a, "Anticipation time t_A <= 0")->capture_default_str();
    rep->add_option("--s-l", s_l, "Lower anticipation multiplier S_l");
    rep->add_option("--s-u", s_u, "Upper anticipation multiplier S_u");
    rep->add_option("--s", s_both, "Sets S_l = S_u");
    rep->add_option("--m-l", m_l, "Lower trend multiplier M_l")->capture_default_str();
    rep->add_option("--m-u", m_u, "Upper trend multiplier M_u")->capture_default_str();
    rep->add_option("--m", m_both, "Sets M_l = M_u");
    rep->add_option("--union-of", union_of, "Parts of a union reference band")->delimiter(',');
    rep->add_option("--equivalence-t-a", eq_t_a, "End of the equivalence window");
    rep->add_flag("--bonferroni", bonferroni, "Add a Bonferroni band");
    rep->add_option("--output,-o", output, "Report JSON path (default stdout)");
    rep->add_option("--plot", plot_path, "Plot-data CSV path");

    auto* sim = app.add_subcommand("simulate", "Monte Carlo studies");
    sim->require_subcommand(1);
    auto* acc = sim->add_subcommand("accuracy", "Mean uniform estimation error per (n, T) cell");
    auto* pow = sim->add_subcommand("power", "Relevance-test rejection rates over effect sizes");
    auto* val = sim->add_subcommand("validation", "Equivalence validation rates over S");
    auto* pan = sim->add_subcommand("panel", "One simulated panel as long-format CSV");
    SimArgs acc_args, pow_args, val_args, pan_args;
    pan_args.t = {21};
    pan_args.add(pan);
    pan->add_option("--seed", seed, "Panel seed")->capture_default_str();
    pan->add_option("--output,-o", output, "Output path (default stdout)");
    val_args.att = "ATT1*";
    val_args.n = {200};
    pow_args.n = {200};
    pow_args.reps = 300;
    acc_args.add(acc);
    pow_args.add(pow);
    val_args.add(val);
    std::vector<double> effects = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<double> s_values = {1.0, 1.25, 1.5, 1.75, 2.0};
    std::vector<std::string> pow_bands = {"SCB-PB", "SCB-MB", "SCB-KR", "Naive", "Bonferroni"};
    std::vector<std::string> val_bands = {"SCB-PB", "SCB-MB", "Naive", "Bonferroni"};
    std::string reference = "trend";
    double pow_m = 0.5;
    std::size_t sim_grid = 0;
    pow->add_option("--effects", effects, "Effect scales a")->delimiter(',')->capture_default_str();
    pow->add_option("--bands", pow_bands, "Bands to evaluate")->delimiter(',')->capture_default_str();
    pow->add_option("--reference", reference, "trend or zero")->capture_default_str();
    pow->add_option("--m", pow_m, "M_l = M_u of the trend reference band")->capture_default_str();
    val->add_option("--s-values", s_values, "Reference band multipliers S")->delimiter(',')->capture_default_str();
    val->add_option("--bands", val_bands, "Bands to evaluate")->delimiter(',')->capture_default_str();
    for (auto* sub : {acc, pow, val}) {
        sub->add_option("--seed", seed, "Study seed")->capture_default_str();
        sub->add_option("--format", format, "json or csv")->capture_default_str();
        sub->add_option("--output,-o", output, "Output path (default stdout)");
    }
    for (auto* sub : {pow, val}) {
        sub->add_option("--alpha", alpha, "Significance level")->capture_default_str();
        sub->add_option("--B", B, "Bootstrap replicates")->capture_default_str();
        sub->add_option("--grid", sim_grid, "Band grid size (default 100 post, 101 pre)");
    }

    auto* srv = app.add_subcommand("serve", "JSON-over-HTTP service");
    std::string host = "127.0.0.1";
    int port = 8080;
    srv->add_option("--host", host, "Bind address")->capture_default_str();
    srv->add_option("--port", port, "Port in [1024, 65535]")->capture_default_str()->check(CLI::Range(1024, 65535));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    set_worker_count(threads);

    if (est->parsed()) {
        const CommandResult r = run_command([&] {
            EstimateOptions o{est_input, est_schema.schema(), parse_format(format)};
            return cmd_estimate(o);
        });
        return emit(r, output, "");
    }
    if (rep->parsed()) {
        const CommandResult r = run_command([&] {
            ReportOptions o;
            o.input = rep_input;
            o.schema = rep_schema.schema();
            o.plot = !plot_path.empty();
            ReportConfig& c = o.config;
            c.alpha = alpha;
            c.method = parse_method(method);
            c.B = B;
            c.seed = seed;
            c.post_grid = post_grid;
            c.pre_grid = pre_grid;
            c.kac_rice_form = parse_kac_rice_form(kr_form);
            c.refband.kind = parse_ref_kind(ref_kind);
            c.refband.t_a = t_a;
            c.refband.s_l = s_both ? s_both : s_l;
            c.refband.s_u = s_both ? s_both : s_u;
            c.refband.m_l = m_both.value_or(m_l);
            c.refband.m_u = m_both.value_or(m_u);
            c.refband.union_of.clear();
            for (const auto& k : union_of) c.refband.union_of.push_back(parse_ref_kind(k));
            c.equivalence_t_a = eq_t_a;
            c.bonferroni = bonferroni;
            return cmd_report(o);
        });
        return emit(r, output, plot_path);
    }
    if (sim->parsed()) {
        const CommandResult r = run_command([&] {
            SimulateOptions o;
            o.format = parse_format(format);
            if (pan->parsed()) {
                const SimConfig c = pan_args.single(seed);
                if (static_cast<double>(c.T) != c.t_pre + c.t_post + 1.0) {
                    throw Error(ErrorCode::NonConsecutiveTimes, "CSV export needs unit time steps: use --t " +
                                                                    format_real(c.t_pre + c.t_post + 1.0));
                }
                CommandResult pr;
                pr.output = format_csv(generate_panel(c, seed).data);
                return pr;
            }
            if (acc->parsed()) {
                o.study = Study::Accuracy;
                for (std::size_t n : acc_args.n) {
                    for (std::size_t T : acc_args.t) o.cells.push_back(acc_args.config(n, T, seed));
                }
            } else if (pow->parsed()) {
                o.study = Study::Power;
                o.power.base = pow_args.single(seed);
                o.power.effects = effects;
                o.power.bands.clear();
                for (const auto& b : pow_bands) o.power.bands.push_back(parse_study_band(b));
                if (reference == "trend") {
                    o.power.reference = PowerReference::Trend;
                } else if (reference == "zero") {
                    o.power.reference = PowerReference::Zero;
                } else {
                    throw Error(ErrorCode::InvalidArgument, "reference must be trend or zero, got '" + reference + "'");
                }
                o.power.m = pow_m;
                o.power.alpha = alpha;
                o.power.B = B;
                if (sim_grid > 0) o.power.grid_size = sim_grid;
            } else {
                o.study = Study::Validation;
                o.validation.base = val_args.single(seed);
                o.validation.s_values = s_values;
                o.validation.bands.clear();
                for (const auto& b : val_bands) o.validation.bands.push_back(parse_study_band(b));
                o.validation.alpha = alpha;
                o.validation.B = B;
                if (sim_grid > 0) o.validation.grid_size = sim_grid;
            }
            return cmd_simulate(o);
        });
        return emit(r, output, "");
    }
    Service service;
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    try {
        std::cerr << "listening on " << host << ':' << port << '\n';
        service.run(host, port);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return kExitOk;
}
