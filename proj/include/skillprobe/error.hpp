#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace skillprobe {

// Stable codes; the CLI prints them verbatim so scripts can match on them.
enum class ErrorCode {
  kInvalidArgument,
  kParseError,
  kDuplicateId,
  kEmptyCorpus,
  kShapeError,
  kSequenceLength,
  kTrainingDiverged,
  kMissingLabel,
  kModelPromptMismatch,
  kAlignmentError,
  kZeroVariance,
  kIoError,
  kValidationFailed,
  kUsage,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// Parse failures carry the 1-based line number they were found on.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(ErrorCode::kParseError,
              "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace skillprobe
