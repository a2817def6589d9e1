#pragma once

#include <iosfwd>

namespace cnalab {

// Exit codes: 0 success, 1 configuration error, 2 data or model error,
// 3 internal invariant violation.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cnalab
