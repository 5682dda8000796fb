#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace vldac::cli {

// Full command-line front end, separated from main() so tests can drive it
// in-process. args excludes the program name.
//
// Exit codes: 0 success, 1 runtime failure (I/O, numerics, failed check),
// 2 usage or configuration errors.
int expcli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace vldac::cli
