#pragma once

#include <string>
#include <vector>

namespace gaslt::cli {

// argv-style entry point (argv[0] is the program name); returns the process
// exit code. Failures print a single "error: <reason>" line on stderr.
int run_cli(int argc, const char* const* argv);

// In-process convenience: the same interface minus the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace gaslt::cli
