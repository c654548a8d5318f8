#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace pcnn::cli {

// Runs one subcommand. args excludes the program name. Returns the process
// exit code: 0 success, 1 validation error or bad usage, 2 I/O error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pcnn::cli
