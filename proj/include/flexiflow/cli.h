//
// SPDX-License-Identifier: Apache-2.0
//

#ifndef FLEXIFLOW_CLI_H_
#define FLEXIFLOW_CLI_H_

#include <iosfwd>

namespace flexiflow {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Prefix of every error line written to `err`.
inline constexpr const char *kErrorPrefix = "flexiflow:error: ";

/// Entry point of the `flexiflow` tool. Returns the process exit code.
int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

}  // namespace flexiflow

#endif  // FLEXIFLOW_CLI_H_
