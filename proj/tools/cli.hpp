#pragma once

#include <iosfwd>

namespace wgmm::cli {

/// Parses arguments, runs one subcommand and returns the process exit code
/// (0 success, 2 config error, 3 data error, 4 numerical failure). Errors are
/// reported on `err` as one line: `error kind=<kind> code=<code> message=<text>`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace wgmm::cli
