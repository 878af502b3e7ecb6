// Copyright 2026 The slidewarp Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// @file cli.hpp
/// @brief Entry point of the `slidewarp` command-line tool.

#pragma once

#include "slidewarp/error.hpp"

namespace slidewarp {

/// Process exit codes.
enum ExitCode : int {
  kExitOk = 0,
  kExitInput = 2,                 ///< bad flags, unreadable or malformed input
  kExitInsufficientFeatures = 3,
  kExitTooFewLandmarks = 4,
  kExitDegenerateFit = 5,
  kExitIo = 6,
  kExitAlignmentFailed = 7,
};

int exit_code_for(ErrorCode code);

/// Parses `argv` and runs one subcommand. Never throws.
int run_cli(int argc, const char* const* argv);

}  // namespace slidewarp
