// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mxfp4::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // I/O or malformed input files
inline constexpr int kExitConfig = 2;   // bad arguments or configuration
inline constexpr int kExitNumeric = 3;  // training diverged

// Runs one invocation of the tool. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mxfp4::cli
