// Copyright 2026 The molstack Authors.
// SPDX-License-Identifier: Apache-2.0

#ifndef MOLSTACK_ERROR_H_
#define MOLSTACK_ERROR_H_

#include <stdexcept>
#include <string>
#include <string_view>

namespace molstack {

enum class ErrorCode {
  // SMILES input.
  kEmptyInput,
  kUnsupportedToken,
  kUnmatchedRingClosure,
  kUnbalancedParenthesis,
  kInvalidBond,
  // Token graph.
  kInconsistentRings,
  // Tensors and training.
  kShapeMismatch,
  kNotScalar,
  kDegenerateVector,
  kStepOutOfRange,
  kDivergedLoss,
  kEmptyGraph,
  kMissingConformer,
  // Stacking.
  kTooFewExamples,
  kMissingPrediction,
  kDuplicateCell,
  kNoFoldsAvailable,
  kUnknownColumn,
  kSingularSystem,
  kNonConvergence,
  kLengthMismatch,
  // Plumbing.
  kInvalidArgument,
  kIo,
  kFormat,
};

// Stable machine-readable name, e.g. "UnsupportedToken".
std::string_view error_name(ErrorCode code);

// True for failures of the numerics rather than of the input.
bool is_numerical(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace molstack

#endif  // MOLSTACK_ERROR_H_
