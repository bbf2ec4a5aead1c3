#include "fpk/error.hpp"

namespace fpk {

std::string_view error_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kOk: return "Ok";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kVersionUnsupported: return "VersionUnsupported";
    case ErrorCode::kDigestMismatch: return "DigestMismatch";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kSchemaError: return "SchemaError";
    case ErrorCode::kHashMismatch: return "HashMismatch";
    case ErrorCode::kSplitLeak: return "SplitLeak";
    case ErrorCode::kLabelInconsistent: return "LabelInconsistent";
    case ErrorCode::kEmptySelection: return "EmptySelection";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kTooFewRows: return "TooFewRows";
    case ErrorCode::kEigenFailure: return "EigenFailure";
    case ErrorCode::kAffineFileMissing: return "AffineFileMissing";
    case ErrorCode::kCacheCorrupt: return "CacheCorrupt";
    case ErrorCode::kSingleClassSplit: return "SingleClassSplit";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kMissingSplit: return "MissingSplit";
    case ErrorCode::kUnknownManipulation: return "UnknownManipulation";
    case ErrorCode::kEmptyHeldOut: return "EmptyHeldOut";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kNoPositives: return "NoPositives";
    case ErrorCode::kMissingArtifacts: return "MissingArtifacts";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInternal: return "InternalError";
  }
  return "UnknownError";
}

}  // namespace fpk
