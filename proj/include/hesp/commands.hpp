#pragma once

#include "hesp/honest.hpp"
#include "hesp/panel.hpp"
#include "hesp/sim.hpp"

#include <functional>
#include <string>
#include <vector>

namespace hesp {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

struct CommandResult {
    int exit_code = kExitOk;
    std::string output;                     // primary JSON or CSV document
    std::string plot;                       // plot-data CSV, report only
    std::string error;
};

/// Runs body and maps library errors to exit codes 2 (validation) and 3 (numerical).
[[nodiscard]] CommandResult run_command(const std::function<CommandResult()>& body);

enum class OutputFormat { Json, Csv };
[[nodiscard]] OutputFormat parse_format(const std::string& s);

struct EstimateOptions {
    std::string input;
    CsvSchema schema;
    OutputFormat format = OutputFormat::Json;
};

struct ReportOptions {
    std::string input;
    CsvSchema schema;
    ReportConfig config;
    bool plot = false;
};

enum class Study { Accuracy, Power, Validation };
[[nodiscard]] Study parse_study(const std::string& s);

struct SimulateOptions {
    Study study = Study::Accuracy;
    std::vector<SimConfig> cells;           // accuracy
    PowerStudyConfig power;
    ValidationStudyConfig validation;
    OutputFormat format = OutputFormat::Json;
};

[[nodiscard]] CommandResult cmd_estimate(const EstimateOptions& opts);
[[nodiscard]] CommandResult cmd_report(const ReportOptions& opts);
[[nodiscard]] CommandResult cmd_simulate(const SimulateOptions& opts);

/// Estimate document for a loaded panel; staggered panels add group detail.
[[nodiscard]] std::string estimate_document(const PanelData& data, OutputFormat format);

}  // namespace hesp
