#include "unwarp/error.hpp"

namespace unwarp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInvalidDepth: return "invalid-depth";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kOrientation: return "orientation";
    case ErrorCode::kDegenerate: return "degenerate";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kNoConsensus: return "no-consensus";
    case ErrorCode::kAmbiguousPose: return "ambiguous-pose";
    case ErrorCode::kEmptyPatch: return "empty-patch";
    case ErrorCode::kUnknownExtractor: return "unknown-extractor";
    case ErrorCode::kDescriptorMismatch: return "descriptor-mismatch";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kValidation: return "validation";
  }
  return "unknown";
}

}  // namespace unwarp
