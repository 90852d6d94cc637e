#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace simpool::cli {

enum ExitCode : int {
  kOk = 0,
  kDatasetError = 2,
  kConfigError = 3,
  kArgumentError = 4,
  kNumericError = 5,
};

inline constexpr const char* kCodeVersion = "simpool 0.1.0";

// Entry point of the `simpool` executable. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace simpool::cli
