#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sprisk::cli {

// Runs one command line (args excludes the program name). Returns the exit
// code: 0 success, 2 validation error, 3 numeric failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sprisk::cli
