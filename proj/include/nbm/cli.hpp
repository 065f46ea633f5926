#pragma once

#include <string>
#include <vector>

namespace nbm {

/// Runs the benchmark command line (arguments without the program name)
/// and returns the process exit code: 0 ok, 2 bad input or configuration,
/// 3 training divergence, 4 dimension mismatch, 5 empty result.
int run_cli(const std::vector<std::string>& args);

} // namespace nbm
