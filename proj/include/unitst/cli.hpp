#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace unitst {

inline constexpr const char* kVersion = "0.1.0";

// Entry point behind the `unitst` binary. Exit codes: 0 success, 1 usage or config error,
// 2 runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace unitst
