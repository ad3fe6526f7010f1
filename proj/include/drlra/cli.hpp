#pragma once

#include <iosfwd>

namespace drlra::harness {

/// Entry point of the `drlra` tool. Returns the process exit status; usage
/// text and one-line diagnostics go to `err`, progress lines to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace drlra::harness
