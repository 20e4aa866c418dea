#include "skillprobe/error.hpp"

namespace skillprobe {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::kParseError: return "PARSE_ERROR";
    case ErrorCode::kDuplicateId: return "DUPLICATE_ID";
    case ErrorCode::kEmptyCorpus: return "EMPTY_CORPUS";
    case ErrorCode::kShapeError: return "SHAPE_ERROR";
    case ErrorCode::kSequenceLength: return "SEQUENCE_LENGTH";
    case ErrorCode::kTrainingDiverged: return "TRAINING_DIVERGED";
    case ErrorCode::kMissingLabel: return "MISSING_LABEL";
    case ErrorCode::kModelPromptMismatch: return "MODEL_PROMPT_MISMATCH";
    case ErrorCode::kAlignmentError: return "ALIGNMENT_ERROR";
    case ErrorCode::kZeroVariance: return "ZERO_VARIANCE";
    case ErrorCode::kIoError: return "IO_ERROR";
    case ErrorCode::kValidationFailed: return "VALIDATION_FAILED";
    case ErrorCode::kUsage: return "USAGE";
  }
  return "UNKNOWN";
}

}  // namespace skillprobe
