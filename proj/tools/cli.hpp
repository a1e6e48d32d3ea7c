#pragma once

#include <iosfwd>

namespace bamp::cli {

/// Exit codes: 0 success, 1 computation error, 2 usage or input error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bamp::cli
