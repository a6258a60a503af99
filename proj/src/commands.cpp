#include "hesp/commands.hpp"

#include "hesp/error.hpp"
#include "hesp/estimate.hpp"
#include "hesp/serialize.hpp"

#include <sstream>

namespace hesp {

CommandResult run_command(const std::function<CommandResult()>& body) {
    try {
        return body();
    } catch (const Error& e) {
        CommandResult r;
        r.exit_code = e.numerical() ? kExitNumerical : kExitValidation;
        r.error = e.what();
        return r;
    } catch (const std::exception& e) {
        CommandResult r;
        r.exit_code = kExitInternal;
        r.error = std::string("internal error: ") + e.what();
        return r;
    }
}

OutputFormat parse_format(const std::string& s) {
    if (s == "json") return OutputFormat::Json;
    if (s == "csv") return OutputFormat::Csv;
    throw Error(ErrorCode::InvalidArgument, "format must be json or csv, got '" + s + "'");
}

Study parse_study(const std::string& s) {
    if (s == "accuracy") return Study::Accuracy;
    if (s == "power") return Study::Power;
    if (s == "validation") return Study::Validation;
    throw Error(ErrorCode::InvalidArgument, "study must be accuracy, power or validation, got '" + s + "'");
}

namespace {

std::string estimate_csv(const PointwiseEstimate& est, const CovMatrix& cov) {
    std::ostringstream os;
    os << "t,beta";
    for (double t : cov.times) os << ",cov_" << format_real(t);
    os << '\n';
    for (std::size_t a = 0; a < est.times.size(); ++a) {
        os << format_real(est.times[a]) << ',' << format_real(est.beta(static_cast<Eigen::Index>(a)));
        for (Eigen::Index b = 0; b < cov.cov.cols(); ++b) os << ',' << format_real(cov.cov(static_cast<Eigen::Index>(a), b));
        os << '\n';
    }
    return os.str();
}

}  // namespace

std::string estimate_document(const PanelData& data, OutputFormat format) {
    if (data.staggered()) {
        const StaggeredSpec spec = staggered_spec(data);
        const StaggeredResult s = staggered_estimate(data, spec);
        if (format == OutputFormat::Csv) return estimate_csv(s.aggregate, s.aggregate_cov);
        return dump(staggered_json(spec, s));
    }
    const EstimateBundle b = estimate_panel(data);
    if (format == OutputFormat::Csv) return estimate_csv(b.est, b.cov);
    return dump(estimate_json(b.est, b.cov));
}

CommandResult cmd_estimate(const EstimateOptions& opts) {
    return run_command([&] {
        CommandResult r;
        r.output = estimate_document(load_csv(opts.input, opts.schema), opts.format);
        return r;
    });
}

CommandResult cmd_report(const ReportOptions& opts) {
    return run_command([&] {
        const HonestEventStudy rep = honest_report(load_csv(opts.input, opts.schema), opts.config);
        CommandResult r;
        r.output = dump(report_json(rep));
        if (opts.plot) r.plot = plot_csv(rep);
        return r;
    });
}

CommandResult cmd_simulate(const SimulateOptions& opts) {
    return run_command([&] {
        CommandResult r;
        const bool csv = opts.format == OutputFormat::Csv;
        switch (opts.study) {
            case Study::Accuracy: {
                if (opts.cells.empty()) throw Error(ErrorCode::EmptyList, "no accuracy cells requested");
                const auto cells = run_accuracy_study(opts.cells);
                r.output = csv ? accuracy_csv(cells) : dump(accuracy_json(cells));
                break;
            }
            case Study::Power: {
                const PowerCurve pc = run_power_study(opts.power);
                r.output = csv ? power_csv(pc) : dump(power_json(pc));
                break;
            }
            case Study::Validation: {
                const PowerCurve pc = run_validation_study(opts.validation);
                r.output = csv ? power_csv(pc) : dump(power_json(pc));
                break;
            }
        }
        return r;
    });
}

}  // namespace hesp
