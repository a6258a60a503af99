#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace hesp {

inline constexpr double kNeverTreated = std::numeric_limits<double>::infinity();

/// Balanced long panel: n units observed at T event times.
///
/// A basic design carries a binary treatment per unit; a staggered design
/// carries a group (reference period) per unit instead, with kNeverTreated
/// marking the controls. Times are stored as reals so simulated panels can
/// live on non-integer equidistant grids; the CSV reader only accepts
/// consecutive integers.
struct PanelData {
    std::vector<std::string> unit_ids;
    std::vector<double> times;
    Eigen::MatrixXd outcomes;               // n x T
    std::vector<double> treatment;          // D_i in {0, 1}; empty when staggered
    std::vector<double> groups;             // G_i; empty when basic
    Eigen::MatrixXd covariates;             // n x k, k may be 0
    std::vector<std::string> covariate_names;

    [[nodiscard]] std::size_t n() const noexcept { return unit_ids.size(); }
    [[nodiscard]] std::size_t T() const noexcept { return times.size(); }
    [[nodiscard]] std::size_t k() const noexcept { return static_cast<std::size_t>(covariates.cols()); }
    [[nodiscard]] bool staggered() const noexcept { return !groups.empty(); }
    [[nodiscard]] bool has_covariates() const noexcept { return covariates.cols() > 0; }

    /// Column index of the reference time 0.
    [[nodiscard]] std::size_t ref_index() const;
    [[nodiscard]] double t_pre() const { return -times.front(); }
    [[nodiscard]] double t_post() const { return times.back(); }

    /// Treatment indicator per unit; for staggered panels 1{G_i finite}.
    [[nodiscard]] std::vector<double> treated_indicator() const;

    /// Checks every structural invariant and throws on the first violation.
    void validate() const;

    bool operator==(const PanelData&) const = default;
};

/// Column mapping for long-format CSV input.
struct CsvSchema {
    std::string unit = "unit";
    std::string time = "time";
    std::string outcome = "outcome";
    std::string treat = "treat";            // binary treatment column
    std::string group;                      // set to read a staggered group column instead
    std::vector<std::string> covariates;
};

[[nodiscard]] PanelData parse_csv(const std::string& text, const CsvSchema& schema);
[[nodiscard]] PanelData load_csv(const std::string& path, const CsvSchema& schema);

/// Long-format CSV with the columns named by schema; times print as integers
/// when integral. Reals use the shortest round-trip representation.
[[nodiscard]] std::string format_csv(const PanelData& data, const CsvSchema& schema = {});
void write_csv(const PanelData& data, const std::string& path, const CsvSchema& schema = {});

/// Cross-section demeaned treatment and outcomes.
struct DemeanedPanel {
    Eigen::VectorXd d_dot;                  // length n
    Eigen::MatrixXd y_dot;                  // n x T
    std::vector<double> times;
    std::size_t ref = 0;                    // column of time 0
    bool residualized = false;              // true when produced by fwl_residualize
};

[[nodiscard]] DemeanedPanel two_way_transform(const PanelData& data);

/// Demeaning over a subset of units with an explicit treatment vector.
[[nodiscard]] DemeanedPanel demean_subset(const PanelData& data, const std::vector<std::size_t>& rows,
                                          const std::vector<double>& d);

/// Shortest decimal string that parses back to exactly x.
[[nodiscard]] std::string format_real(double x);

}  // namespace hesp
