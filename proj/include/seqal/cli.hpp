#pragma once

#include <iosfwd>

namespace seqal::cli {

/// Entry point behind the seqal executable. Reports go to `out`, log records
/// and diagnostics to `err`. Returns 0 on success, 1 on runtime failure and 2
/// on invalid usage.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace seqal::cli
