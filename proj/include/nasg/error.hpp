/*
 * Copyright (c) The noisy-asg authors.
 *
 * This source code is licensed under the MIT license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nasg {

enum class ErrorCode {
  kTripleRepeat,
  kMalformedSequence,
  kUnknownSymbol,
  kDimensionMismatch,
  kTranscriptionTooLong,
  kEmptyTranscription,
  kLengthMismatch,
  kEmptyCorpus,
  kInvalidFactor,
  kInvalidModel,
  kInfeasibleCorruption,
  kEmptyBeam,
  kLimitExceeded,
  kNonFinite,
  kNonFiniteLoss,
  kIdMismatch,
  kParse,
  kIo,
};

inline std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kTripleRepeat: return "TripleRepeat";
    case ErrorCode::kMalformedSequence: return "MalformedSequence";
    case ErrorCode::kUnknownSymbol: return "UnknownSymbol";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kTranscriptionTooLong: return "TranscriptionTooLong";
    case ErrorCode::kEmptyTranscription: return "EmptyTranscription";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyCorpus: return "EmptyCorpus";
    case ErrorCode::kInvalidFactor: return "InvalidFactor";
    case ErrorCode::kInvalidModel: return "InvalidModel";
    case ErrorCode::kInfeasibleCorruption: return "InfeasibleCorruption";
    case ErrorCode::kEmptyBeam: return "EmptyBeam";
    case ErrorCode::kLimitExceeded: return "LimitExceeded";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kIdMismatch: return "IdMismatch";
    case ErrorCode::kParse: return "Parse";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so the
/// CLI can map it to an exit status without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept {
    return code_;
  }

 private:
  ErrorCode code_;
};

} // namespace nasg
