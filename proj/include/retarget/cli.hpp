#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace retarget::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes: 0 success, 1 invalid input (bad flags, files, chains or shapes),
// 2 runtime failure (damaged files, divergence, anything unexpected).
// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv);

}  // namespace retarget::cli
