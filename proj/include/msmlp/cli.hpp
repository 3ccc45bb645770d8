#pragma once

#include <iosfwd>

namespace msmlp {

/// Entry point of the `msmlp` tool. Returns 0 on success, 1 when a check
/// fails, 2 on usage errors. Output goes to `out`, diagnostics to `err`.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int cli_main(int argc, const char* const* argv);

}  // namespace msmlp
