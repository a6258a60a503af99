#include "hesp/panel.hpp"

#include "hesp/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace hesp {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    std::string out(s.substr(b, e - b));
    if (out.size() >= 2 && out.front() == '"' && out.back() == '"') out = out.substr(1, out.size() - 2);
    return out;
}

std::vector<std::string> split_row(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
            cur.push_back(c);
        } else if (c == ',' && !quoted) {
            fields.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    fields.push_back(trim(cur));
    return fields;
}

double parse_real(const std::string& s, const std::string& column, std::size_t line) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (!s.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || s.empty()) {
        throw Error(ErrorCode::InvalidArgument,
                    "line " + std::to_string(line) + ": column '" + column + "' is not a number: '" + s + "'");
    }
    return v;
}

bool is_never_label(const std::string& s) {
    return s.empty() || s == "inf" || s == "Inf" || s == "INF" || s == "never" || s == "NA" || s == "Inf.";
}

bool all_integer_labels(const std::vector<std::string>& labels) {
    return std::all_of(labels.begin(), labels.end(), [](const std::string& s) {
        long long v = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        return !s.empty() && ec == std::errc() && ptr == s.data() + s.size();
    });
}

}  // namespace

std::string format_real(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (std::isnan(x)) return "nan";
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, ptr);
}

std::size_t PanelData::ref_index() const {
    const auto it = std::find(times.begin(), times.end(), 0.0);
    if (it == times.end()) throw Error(ErrorCode::MissingReferencePeriod, "time 0 is not observed");
    return static_cast<std::size_t>(it - times.begin());
}

std::vector<double> PanelData::treated_indicator() const {
    if (!staggered()) return treatment;
    std::vector<double> d(groups.size());
    std::transform(groups.begin(), groups.end(), d.begin(),
                   [](double g) { return std::isfinite(g) ? 1.0 : 0.0; });
    return d;
}

void PanelData::validate() const {
    const std::size_t nn = n();
    const std::size_t tt = T();
    if (nn == 0 || tt == 0) throw Error(ErrorCode::InvalidArgument, "panel is empty");
    if (static_cast<std::size_t>(outcomes.rows()) != nn || static_cast<std::size_t>(outcomes.cols()) != tt) {
        throw Error(ErrorCode::UnbalancedPanel, "outcome matrix is not n x T");
    }
    for (std::size_t j = 1; j < tt; ++j) {
        if (!(times[j] > times[j - 1])) throw Error(ErrorCode::NonMonotoneKnots, "times are not strictly increasing");
    }
    (void)ref_index();
    if (!(times.front() < 0.0)) throw Error(ErrorCode::InvalidArgument, "no pre-treatment period (T_pre < 1)");
    if (!(times.back() > 0.0)) throw Error(ErrorCode::InvalidArgument, "no post-treatment period (T_post < 1)");
    if (!outcomes.allFinite()) throw Error(ErrorCode::InvalidArgument, "outcomes contain non-finite values");
    if (treatment.empty() == groups.empty()) {
        throw Error(ErrorCode::InvalidArgument, "panel needs exactly one of treatment or groups");
    }
    if (has_covariates()) {
        if (static_cast<std::size_t>(covariates.rows()) != nn) {
            throw Error(ErrorCode::DimensionMismatch, "covariate matrix rows differ from unit count");
        }
        if (!covariates.allFinite()) throw Error(ErrorCode::InvalidArgument, "covariates contain non-finite values");
    }
    std::size_t treated = 0;
    if (!staggered()) {
        if (treatment.size() != nn) throw Error(ErrorCode::DimensionMismatch, "treatment length differs from n");
        for (double d : treatment) {
            if (d != 0.0 && d != 1.0) throw Error(ErrorCode::NonBinaryTreatment, "treatment must be 0 or 1");
            treated += d == 1.0 ? 1 : 0;
        }
        if (treated == 0 || treated == nn) {
            throw Error(ErrorCode::NoOverlap, "need at least one treated and one untreated unit");
        }
    } else {
        if (groups.size() != nn) throw Error(ErrorCode::DimensionMismatch, "group length differs from n");
        for (double g : groups) {
            if (std::isfinite(g)) {
                ++treated;
                if (std::find(times.begin(), times.end(), g) == times.end()) {
                    throw Error(ErrorCode::InvalidArgument, "group " + format_real(g) + " is not an observed time");
                }
            } else if (g != kNeverTreated) {
                throw Error(ErrorCode::InvalidArgument, "group must be a time or never-treated");
            }
        }
        if (treated == 0) throw Error(ErrorCode::NoOverlap, "no unit belongs to a treatment group");
    }
}

PanelData parse_csv(const std::string& text, const CsvSchema& schema) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!trim(line).empty()) {
            header = split_row(line);
            break;
        }
    }
    if (header.empty()) throw Error(ErrorCode::InvalidArgument, "CSV has no header row");
    if (!header.empty() && header[0].size() >= 3 && header[0].compare(0, 3, "\xEF\xBB\xBF") == 0) {
        header[0] = header[0].substr(3);
    }

    const auto column = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw Error(ErrorCode::MissingColumn, "column '" + name + "' not found");
        return static_cast<std::size_t>(it - header.begin());
    };
    const bool staggered = !schema.group.empty();
    const std::size_t c_unit = column(schema.unit);
    const std::size_t c_time = column(schema.time);
    const std::size_t c_y = column(schema.outcome);
    const std::size_t c_d = column(staggered ? schema.group : schema.treat);
    std::vector<std::size_t> c_w;
    for (const auto& w : schema.covariates) c_w.push_back(column(w));

    struct UnitRow {
        double d = 0.0;
        std::vector<double> w;
        std::map<long long, double> y;
        std::size_t first_line = 0;
    };
    std::unordered_map<std::string, UnitRow> units;
    std::vector<long long> all_times;

    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto f = split_row(line);
        if (f.size() != header.size()) {
            throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(line_no) + ": expected " +
                                                        std::to_string(header.size()) + " fields, got " +
                                                        std::to_string(f.size()));
        }
        const std::string& id = f[c_unit];
        const double tval = parse_real(f[c_time], schema.time, line_no);
        if (tval != std::floor(tval) || std::abs(tval) > 1e9) {
            throw Error(ErrorCode::InvalidArgument,
                        "line " + std::to_string(line_no) + ": time must be an integer, got '" + f[c_time] + "'");
        }
        const auto t = static_cast<long long>(tval);
        const double y = parse_real(f[c_y], schema.outcome, line_no);

        double d = 0.0;
        if (staggered) {
            if (is_never_label(f[c_d])) {
                d = kNeverTreated;
            } else {
                d = parse_real(f[c_d], schema.group, line_no);
                if (d != std::floor(d)) throw Error(ErrorCode::InvalidArgument, "group must be an integer");
            }
        } else {
            d = parse_real(f[c_d], schema.treat, line_no);
            if (d != 0.0 && d != 1.0) {
                throw Error(ErrorCode::NonBinaryTreatment, "line " + std::to_string(line_no) +
                                                               ": treatment must be 0 or 1, got '" + f[c_d] + "'");
            }
        }
        std::vector<double> w;
        w.reserve(c_w.size());
        for (std::size_t j = 0; j < c_w.size(); ++j) w.push_back(parse_real(f[c_w[j]], schema.covariates[j], line_no));

        auto [it, inserted] = units.try_emplace(id);
        UnitRow& u = it->second;
        if (inserted) {
            u.d = d;
            u.w = std::move(w);
            u.first_line = line_no;
        } else {
            if (u.d != d) {
                throw Error(ErrorCode::TimeVaryingTreatment, "unit '" + id + "' changes " +
                                                                 (staggered ? "group" : "treatment") + " over time");
            }
            if (u.w != w) throw Error(ErrorCode::TimeVaryingCovariate, "unit '" + id + "' has time-varying covariates");
        }
        if (!u.y.emplace(t, y).second) {
            throw Error(ErrorCode::DuplicateCell, "unit '" + id + "' has more than one row at time " + std::to_string(t));
        }
        all_times.push_back(t);
    }
    if (units.empty()) throw Error(ErrorCode::InvalidArgument, "CSV has no data rows");

    std::sort(all_times.begin(), all_times.end());
    all_times.erase(std::unique(all_times.begin(), all_times.end()), all_times.end());
    if (std::find(all_times.begin(), all_times.end(), 0LL) == all_times.end()) {
        throw Error(ErrorCode::MissingReferencePeriod, "reference time 0 is not observed");
    }
    for (std::size_t j = 1; j < all_times.size(); ++j) {
        if (all_times[j] != all_times[j - 1] + 1) {
            throw Error(ErrorCode::NonConsecutiveTimes, "times jump from " + std::to_string(all_times[j - 1]) +
                                                            " to " + std::to_string(all_times[j]));
        }
    }

    std::vector<std::string> ids;
    ids.reserve(units.size());
    for (const auto& [id, _] : units) ids.push_back(id);
    if (all_integer_labels(ids)) {
        std::sort(ids.begin(), ids.end(), [](const std::string& a, const std::string& b) {
            return std::stoll(a) < std::stoll(b) || (std::stoll(a) == std::stoll(b) && a < b);
        });
    } else {
        std::sort(ids.begin(), ids.end());
    }

    PanelData p;
    const std::size_t n = ids.size();
    const std::size_t T = all_times.size();
    p.unit_ids = ids;
    p.times.assign(all_times.begin(), all_times.end());
    p.outcomes.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(T));
    p.covariates.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c_w.size()));
    p.covariate_names = schema.covariates;
    (staggered ? p.groups : p.treatment).resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const UnitRow& u = units.at(ids[i]);
        if (u.y.size() != T) {
            for (long long t : all_times) {
                if (!u.y.count(t)) {
                    throw Error(ErrorCode::UnbalancedPanel,
                                "unit '" + ids[i] + "' has no row at time " + std::to_string(t));
                }
            }
        }
        std::size_t j = 0;
        for (const auto& [t, y] : u.y) p.outcomes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j++)) = y;
        (staggered ? p.groups : p.treatment)[i] = u.d;
        for (std::size_t c = 0; c < c_w.size(); ++c) {
            p.covariates(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = u.w[c];
        }
    }
    p.validate();
    return p;
}

PanelData load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_csv(ss.str(), schema);
}

std::string format_csv(const PanelData& data, const CsvSchema& schema) {
    std::string out;
    const bool staggered = data.staggered();
    out += schema.unit + "," + schema.time + "," + schema.outcome + "," +
           (staggered ? (schema.group.empty() ? std::string("group") : schema.group) : schema.treat);
    const auto& cov_names = schema.covariates.empty() ? data.covariate_names : schema.covariates;
    for (const auto& w : cov_names) out += "," + w;
    out += "\n";
    for (std::size_t i = 0; i < data.n(); ++i) {
        const double d = staggered ? data.groups[i] : data.treatment[i];
        const std::string d_str = std::isinf(d) ? std::string("inf") : format_real(d);
        for (std::size_t j = 0; j < data.T(); ++j) {
            out += data.unit_ids[i];
            out += ',';
            out += format_real(data.times[j]);
            out += ',';
            out += format_real(data.outcomes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
            out += ',';
            out += d_str;
            for (Eigen::Index c = 0; c < data.covariates.cols(); ++c) {
                out += ',';
                out += format_real(data.covariates(static_cast<Eigen::Index>(i), c));
            }
            out += '\n';
        }
    }
    return out;
}

void write_csv(const PanelData& data, const std::string& path, const CsvSchema& schema) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
    out << format_csv(data, schema);
}

DemeanedPanel demean_subset(const PanelData& data, const std::vector<std::size_t>& rows,
                            const std::vector<double>& d) {
    const auto m = static_cast<Eigen::Index>(rows.size());
    const auto T = static_cast<Eigen::Index>(data.T());
    DemeanedPanel dp;
    dp.times = data.times;
    dp.ref = data.ref_index();
    dp.d_dot.resize(m);
    dp.y_dot.resize(m, T);
    double d_mean = 0.0;
    for (Eigen::Index r = 0; r < m; ++r) {
        dp.d_dot(r) = d[static_cast<std::size_t>(r)];
        d_mean += dp.d_dot(r);
        dp.y_dot.row(r) = data.outcomes.row(static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)]));
    }
    d_mean /= static_cast<double>(m);
    dp.d_dot.array() -= d_mean;
    const Eigen::RowVectorXd y_mean = dp.y_dot.colwise().mean();
    dp.y_dot.rowwise() -= y_mean;
    return dp;
}

DemeanedPanel two_way_transform(const PanelData& data) {
    data.validate();
    std::vector<std::size_t> rows(data.n());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return demean_subset(data, rows, data.treated_indicator());
}

}  // namespace hesp
