#pragma once

#include <iosfwd>

namespace shipem::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;  // usage, config and validation errors
inline constexpr int kExitFault = 2;  // runtime faults

/// Entry point of the shipem tool; writes normal output to out and
/// diagnostics to err and returns the process exit code.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace shipem::cli
