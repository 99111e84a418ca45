#pragma once

#include <string>
#include <vector>

namespace papp::cli {

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfig = 2,
  kIo = 3,
  kNumeric = 4,
};

/// Runs the experiment CLI with argv-style arguments (args[0] is the program
/// name) and returns the process exit status.
int run(const std::vector<std::string>& args);

/// Output root used when --out is not given: $PAPP_OUTPUT_ROOT, else "runs".
std::string default_output_root();

}  // namespace papp::cli
