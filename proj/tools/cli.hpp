#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace anchorprop::cli {

/// Runs one command line (args excludes the program name). Returns the process
/// exit status: 0 success, 1 validation error, 2 I/O error, 3 invariant violation.
/// Errors are reported on `err` as a single JSON object.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace anchorprop::cli
