#pragma once

#include <string>
#include <vector>

namespace dcosim::cli {

enum ExitCode : int {
    kSuccess = 0,
    kValidationError = 1,
    kRuntimeError = 2,
    kAuthenticationRejected = 3,
};

/// Entry point behind the `cosim` executable. Subcommands: master, backend,
/// demo1, demo2, report.
int run_command(int argc, const char* const* argv);
int run_command(const std::vector<std::string>& args);

} // namespace dcosim::cli
