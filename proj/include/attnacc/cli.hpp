#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace attnacc {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitInvalid = 1, kExitUsage = 2 };

/// Runs the `attnacc` command line. argv[0] is the program name.
/// Machine output goes to `out`, diagnostics to `err`.
int cli_main(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace attnacc
