#pragma once

#include <iosfwd>

namespace xlpack {

/// Entry point shared by the executable and the tests. Returns the exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace xlpack
