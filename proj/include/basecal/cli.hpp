#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace basecal::cli {

// Runs one `basecal` invocation. args[0] is the program name.
// Exit status: 0 success, 1 domain or validation failure, 2 I/O or format failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace basecal::cli
