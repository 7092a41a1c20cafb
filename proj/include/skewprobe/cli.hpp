#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace skewprobe {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDataError = 1;
inline constexpr int kExitConfigError = 2;

/// Entry point of the `skewprobe` binary. args[0] is the program name.
/// Results go to files or `out`; JSON-line log events go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace skewprobe
