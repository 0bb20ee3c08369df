#pragma once

#include <string>
#include <vector>

namespace lyra {

/// Command-line entry point; `args` excludes the program name.
/// Returns the process exit code (0 success, 2 usage).
int run_cli(std::vector<std::string> args);

}  // namespace lyra
