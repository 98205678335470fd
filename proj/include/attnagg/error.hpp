/*
 * Copyright 2026 The attnagg Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace attnagg {

// Every failure raised by the library carries one of these codes so callers
// (tests, the CLI exit-code mapping) can dispatch without string matching.
enum class ErrorCode {
  kShapeMismatch,
  kDomainError,
  kNonFinite,
  kInvalidAxis,
  kNotScalar,
  kDetachedGraph,
  kUnknownGroup,
  kNonBinaryLabel,
  kPriorOutOfRange,
  kDuplicateEpoch,
  kUnknownSample,
  kInvalidSpec,
  kNoPositives,
  kBadFractions,
  kDegenerateAttribute,
  kNonFiniteLoss,
  kInvalidConfig,
  kIo,
};

std::string_view ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace attnagg
