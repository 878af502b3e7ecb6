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

/// @file error.hpp
/// @brief Error taxonomy shared by every module.
///
/// All library failures are reported as `slidewarp::Error`, which carries an
/// `ErrorCode`. The CLI maps codes to process exit statuses.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace slidewarp {

enum class ErrorCode {
  kInvalidArgument,
  kInsufficientFeatures,
  kAlignmentFailed,
  kDegenerateHistogram,
  kNoTissue,
  kFlatPatch,
  kTooFewLandmarks,
  kDegenerateFit,
  kNoEvaluablePoints,
  kVersionError,
  kParseError,
  kIoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace slidewarp
