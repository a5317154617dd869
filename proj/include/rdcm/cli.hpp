#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rdcm {

/// Process exit codes of the command-line front end.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,  // unexpected error (I/O and the like)
  kExitConfig = 2,   // configuration, validation or data errors
  kExitNumerical = 3,
};

/// Runs one invocation. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rdcm
