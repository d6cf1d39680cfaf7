#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace ddml {

/// Command-line values that take precedence over the config file.
struct CliOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<std::string> out;
};

enum ExitCode : int { kExitOk = 0, kExitInternal = 1, kExitConfig = 2, kExitData = 3, kExitEstimation = 4 };

/// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

// Each command writes its table to `out`, diagnostics to `err`, and returns
// the exit code. They never throw.
int cmd_estimate(const std::filesystem::path& config, const CliOverrides& overrides, std::ostream& out,
                 std::ostream& err);
int cmd_simulate(const std::filesystem::path& config, const CliOverrides& overrides, std::ostream& out,
                 std::ostream& err);
int cmd_inspect(const std::filesystem::path& results, const std::string& what, std::ostream& out, std::ostream& err);
/// Fold ids an `estimate` run with the same config would use, as CSV to
/// --out (or `out` when none is given).
int cmd_export_folds(const std::filesystem::path& config, const CliOverrides& overrides, std::ostream& out,
                     std::ostream& err);

}  // namespace ddml
