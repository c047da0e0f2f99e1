#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace segsplat {

/// Command-line driver. `args` excludes the program name. Returns the exit
/// code; messages go to `out` and `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace segsplat
