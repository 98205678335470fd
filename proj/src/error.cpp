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

#include "attnagg/error.hpp"

namespace attnagg {

std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kDomainError: return "DomainError";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kInvalidAxis: return "InvalidAxis";
    case ErrorCode::kNotScalar: return "NotScalar";
    case ErrorCode::kDetachedGraph: return "DetachedGraph";
    case ErrorCode::kUnknownGroup: return "UnknownGroup";
    case ErrorCode::kNonBinaryLabel: return "NonBinaryLabel";
    case ErrorCode::kPriorOutOfRange: return "PriorOutOfRange";
    case ErrorCode::kDuplicateEpoch: return "DuplicateEpoch";
    case ErrorCode::kUnknownSample: return "UnknownSample";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kNoPositives: return "NoPositives";
    case ErrorCode::kBadFractions: return "BadFractions";
    case ErrorCode::kDegenerateAttribute: return "DegenerateAttribute";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace attnagg
