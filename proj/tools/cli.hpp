#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rrag::cli {

enum ExitCode : int {
  k_exit_ok = 0,
  k_exit_usage = 1,
  k_exit_data = 2,
  k_exit_backend = 3,
};

/// Runs one subcommand. `args` excludes the program name. Data goes to files
/// or `out`; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rrag::cli
