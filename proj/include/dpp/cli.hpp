#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dpp::cli {

enum ExitCode : int {
  kSuccess = 0,
  kValidationFailure = 1,
  kIoFailure = 2,
  kRuntimeFailure = 3,
};

/// Entry point shared by the `dpp` binary and the tests. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dpp::cli
