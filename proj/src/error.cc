// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#include "molstack/error.h"

namespace molstack {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kUnsupportedToken: return "UnsupportedToken";
    case ErrorCode::kUnmatchedRingClosure: return "UnmatchedRingClosure";
    case ErrorCode::kUnbalancedParenthesis: return "UnbalancedParenthesis";
    case ErrorCode::kInvalidBond: return "InvalidBond";
    case ErrorCode::kInconsistentRings: return "InconsistentRings";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNotScalar: return "NotScalar";
    case ErrorCode::kDegenerateVector: return "DegenerateVector";
    case ErrorCode::kStepOutOfRange: return "StepOutOfRange";
    case ErrorCode::kDivergedLoss: return "DivergedLoss";
    case ErrorCode::kEmptyGraph: return "EmptyGraph";
    case ErrorCode::kMissingConformer: return "MissingConformer";
    case ErrorCode::kTooFewExamples: return "TooFewExamples";
    case ErrorCode::kMissingPrediction: return "MissingPrediction";
    case ErrorCode::kDuplicateCell: return "DuplicateCell";
    case ErrorCode::kNoFoldsAvailable: return "NoFoldsAvailable";
    case ErrorCode::kUnknownColumn: return "UnknownColumn";
    case ErrorCode::kSingularSystem: return "SingularSystem";
    case ErrorCode::kNonConvergence: return "NonConvergence";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kFormat: return "Format";
  }
  return "Unknown";
}

bool is_numerical(ErrorCode code) {
  switch (code) {
    case ErrorCode::kDegenerateVector:
    case ErrorCode::kDivergedLoss:
    case ErrorCode::kSingularSystem:
    case ErrorCode::kNonConvergence:
      return true;
    default:
      return false;
  }
}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace molstack
