// Command-line verbs: train, gradcheck, gradflow, gen, sweep.
//
// Exit codes are part of the interface:
//   0 success, 2 usage or config error, 3 numeric divergence, 4 I/O error,
//   5 gradient check failure.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace momentum::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDiverged = 3;
inline constexpr int kExitIo = 4;
inline constexpr int kExitGradCheck = 5;

inline constexpr const char* kVersion = "0.1.0";

/// args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace momentum::cli
