#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fapm::cli {

/// Parses `args` (without the program name) and runs one subcommand.
/// Returns the process exit status: 0 ok, 2 input error, 3 incompatibility.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fapm::cli
