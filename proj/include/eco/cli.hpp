#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace eco::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitValidation = 2;

// Runs one invocation: args[0] is the program name, args[1] the subcommand
// (rank, eval, filter, consensus, clipscore). Returns the process exit code.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace eco::cli
