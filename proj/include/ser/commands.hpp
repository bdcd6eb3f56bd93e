#pragma once

#include <iosfwd>

namespace ser {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `ser` tool: synth-data, train, evaluate, gradcheck,
// export-attention. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace ser
