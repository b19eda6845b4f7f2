#pragma once

#include <string>
#include <vector>

namespace axloc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs one command line; args[0] is the program name. Returns the exit code.
int run(const std::vector<std::string>& args);

}  // namespace axloc::cli
