#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sat {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitVerificationFailed = 1,
  kExitUsage = 2,
  kExitRuntime = 3,
};

/// Entry point behind the satlab executable. `args` excludes argv[0].
/// A one-line JSON summary goes to `out`; diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sat
