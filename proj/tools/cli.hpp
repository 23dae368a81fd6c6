#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mdpo::cli {

enum ExitCode : int {
  kOk = 0,
  kPropertyFailure = 1,
  kUserError = 2,
  kRefusal = 3,
  /// A backend, stage or training run failed for reasons outside the input.
  kRuntimeFailure = 4,
};

/// Runs one command line (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mdpo::cli
