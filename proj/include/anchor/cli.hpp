#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace anchor::cli {

// Process exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsageError = 1;
inline constexpr int kBackendError = 2;
inline constexpr int kNoAnswer = 3;

/// Entry point behind the `anchor` executable. `args` excludes the program
/// name. Settings resolve as: flags, then the --config JSON file, then the
/// ANCHOR_BACKEND_URL environment variable.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace anchor::cli
