#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dsrefine/refine.hpp"

namespace dsrefine {

/// Everything a run needs besides command-line overrides.
struct CliConfig {
    std::optional<std::string> dataset;
    std::optional<std::string> model_path;
    std::optional<std::string> output_dir;
    PipelineConfig pipeline;
};

/// Configuration problem detected before any work starts (exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parses a JSON config. Unknown keys, wrong types and out-of-range values raise ConfigError.
CliConfig parse_cli_config(std::string_view json_text);

/// Fully populated config as JSON; feeding it back to parse_cli_config reproduces the run.
std::string resolved_config_json(const CliConfig& cfg);

std::string_view version_string();

/// Command-line entry point. Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
/// Progress goes to `out`, diagnostics to `err`; data only goes to files.
int execute(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dsrefine
