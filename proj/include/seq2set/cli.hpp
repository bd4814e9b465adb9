#pragma once

#include <iosfwd>
#include <span>
#include <string>

namespace seq2set::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Runs one command. args excludes the program name. Errors are reported on
// `err` as a single line "error: <kind>: <message>".
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace seq2set::cli
