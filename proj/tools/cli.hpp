#pragma once

#include <string>
#include <vector>

namespace occtrack::cli {

inline constexpr const char* kVersion = "occtrack 1.0.0";

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kIo = 3, kCorrupt = 4 };

/// Runs the command line `args` (args[0] is the program name) and returns the exit code.
int run(const std::vector<std::string>& args);

}  // namespace occtrack::cli
