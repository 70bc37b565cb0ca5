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

#include "wavemeta/error.hpp"

namespace wavemeta {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kDimension: return "dimension_error";
    case ErrorCode::kNumericalBlowup: return "numerical_blowup";
    case ErrorCode::kConvergence: return "convergence_error";
    case ErrorCode::kStabilityAssumption: return "stability_assumption_violated";
    case ErrorCode::kPrecondition: return "precondition_error";
    case ErrorCode::kDegenerateMode: return "degenerate_mode";
    case ErrorCode::kInfeasibleControl: return "infeasible_control";
    case ErrorCode::kConstructionFailed: return "construction_failed";
    case ErrorCode::kOracleInconsistency: return "oracle_inconsistency";
    case ErrorCode::kConfiguration: return "configuration_error";
    case ErrorCode::kIo: return "io_error";
    case ErrorCode::kInternal: return "internal_error";
  }
  return "unknown_error";
}

}  // namespace wavemeta
