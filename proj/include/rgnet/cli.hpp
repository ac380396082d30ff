// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>

namespace rgnet {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitConfig = 3, kExitData = 4, kExitNumeric = 5 };

/// Entry point of the command-line tool. Failures print one line of the form
/// "error: <kind>: <message>" to `err` and return the matching exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rgnet
