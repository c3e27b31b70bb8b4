#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecodyn::cli {

/// Stable exit-code contract.
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

/// Bad flag values or combinations not caught by the parser.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical outcome the command treats as failure (e.g. sweep properties).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Entry point; `args` excludes the program name. Diagnostics go to `err`,
/// short progress lines to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace ecodyn::cli
