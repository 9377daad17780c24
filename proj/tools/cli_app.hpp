#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mpsim {

// Parses argv-style arguments (program name excluded) and runs exactly one
// subcommand. Diagnostics go to `err`, results to `out`. Returns the process
// exit code: 0 success, 2 invalid input or usage, 1 internal failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

}  // namespace mpsim
