/*
 * Copyright 2026 The wavemeta Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
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

namespace wavemeta {

// Error categories shared by the C++ core and the C API status codes.
enum class ErrorCode {
  kInvalidArgument = 1,
  kParse = 2,
  kDimension = 3,
  kNumericalBlowup = 4,
  kConvergence = 5,
  kStabilityAssumption = 6,
  kPrecondition = 7,
  kDegenerateMode = 8,
  kInfeasibleControl = 9,
  kConstructionFailed = 10,
  kOracleInconsistency = 11,
  kConfiguration = 12,
  kIo = 13,
  kInternal = 99,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace wavemeta
