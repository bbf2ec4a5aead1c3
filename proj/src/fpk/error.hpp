#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fpk {

// Numeric values are mirrored by fpk_status in include/fpk/fpk.h.
enum class ErrorCode : int {
  kOk = 0,
  kIo = 1,
  kNonFiniteValue = 2,
  kBadMagic = 3,
  kVersionUnsupported = 4,
  kDigestMismatch = 5,
  kTruncatedFile = 6,
  kSchemaError = 7,
  kHashMismatch = 8,
  kSplitLeak = 9,
  kLabelInconsistent = 10,
  kEmptySelection = 11,
  kDimMismatch = 12,
  kZeroVector = 13,
  kTooFewRows = 14,
  kEigenFailure = 15,
  kAffineFileMissing = 16,
  kCacheCorrupt = 17,
  kSingleClassSplit = 18,
  kNonFiniteLoss = 19,
  kMissingSplit = 20,
  kUnknownManipulation = 21,
  kEmptyHeldOut = 22,
  kSingleClass = 23,
  kNoPositives = 24,
  kMissingArtifacts = 25,
  kConfigError = 26,
  kInvalidArgument = 27,
  kInternal = 28,
};

std::string_view error_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace fpk
