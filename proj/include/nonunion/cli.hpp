#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace nonunion {

/// Runs one CLI invocation (args exclude the program name). Returns the exit code:
/// 0 success, 1 usage/config error, 2 data error, 3 internal or convergence error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nonunion
