#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace latentprobe {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitUsage = 2,
    kExitFormat = 3,
    kExitNumeric = 4,
};

/// Runs the `probe` command line. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace latentprobe
