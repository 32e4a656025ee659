// Copyright 2026 The DUQ Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end.
//
//   duq <subcommand> [--config FILE] [--overwrite] [section.key=value ...]
//
// Subcommands: train, eval-ood, grid, select-sigma, select-lambda,
// ensemble-train, gen-data. Exit status 0 on success, 1 for user errors
// (bad arguments, config, missing or malformed files), 2 for runtime
// failures (divergence, internal errors).

#ifndef DUQ_RUNNER_H_
#define DUQ_RUNNER_H_

#include <ostream>

namespace duq {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 1;
inline constexpr int kExitRuntimeError = 2;

int RunCli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace duq

#endif  // DUQ_RUNNER_H_
