#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace leakaudit {

enum class ErrorCode {
  MissingFile,
  MalformedRecord,
  DuplicateId,
  InvariantViolation,
  PreconditionViolation,
  MissingDelimiters,
  MalformedPayload,
  ProviderError,
  ValidationError,
  UnparseableUrl,
  EngineUnavailable,
  UndecodableContent,
  ZeroVector,
  DimensionMismatch,
  EmbedderError,
  MissingKey,
  ScoreOutOfRange,
  InconsistentFlag,
  ParseExhausted,
  EmptyQuestion,
  LengthMismatch,
  LabelOutOfRange,
  DegenerateMarginals,
  OutOfRangeProbability,
  NoProbabilityFound,
  MissingUpstream,
  ConfigInvalid,
  UnknownDoc,
  IncompleteGold,
  Conflict,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the toolkit; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace leakaudit
