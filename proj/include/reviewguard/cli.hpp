#pragma once

#include <iosfwd>

namespace reviewguard {

// Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace reviewguard
