#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace zscr::tools {

/// Runs the `zscr` command line. `args` excludes the program name.
/// Returns 0 on success, 1 for validation/config errors and 2 for runtime
/// and I/O errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace zscr::tools
