#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace geoworld::cli {

enum ExitStatus : int {
  kSuccess = 0,
  kDomainError = 1,
  kUsageError = 2,
};

/// Runs one subcommand. args excludes the program name. The JSON report goes to
/// `out`; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, char** argv);

/// "%.9g" with ".0" appended to integral-looking values; NaN and infinities become null.
std::string format_number(double v);

}  // namespace geoworld::cli
