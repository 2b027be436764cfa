#pragma once

#include <iosfwd>

namespace focal::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kAborted = 3,
};

/// Entry point for the `focal` tool. `in` feeds the interactive oracle.
int main(int argc, const char* const* argv, std::istream& in, std::ostream& out, std::ostream& err);

} // namespace focal::cli
