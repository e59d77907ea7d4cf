#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace grimp {

// Exit codes shared by every command.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitValidation = 2,
  kExitIo = 3,
  kExitNumeric = 4,
};

// Runs one command line (args[0] is the program name). Parameters resolve as
// built-in defaults < --config JSON file < explicit flags, and every command
// writes the resolved set to <out-dir>/config.json.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace grimp
