#include "leakaudit/error.hpp"

namespace leakaudit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::PreconditionViolation: return "PreconditionViolation";
    case ErrorCode::MissingDelimiters: return "MissingDelimiters";
    case ErrorCode::MalformedPayload: return "MalformedPayload";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::ValidationError: return "ValidationError";
    case ErrorCode::UnparseableUrl: return "UnparseableUrl";
    case ErrorCode::EngineUnavailable: return "EngineUnavailable";
    case ErrorCode::UndecodableContent: return "UndecodableContent";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmbedderError: return "EmbedderError";
    case ErrorCode::MissingKey: return "MissingKey";
    case ErrorCode::ScoreOutOfRange: return "ScoreOutOfRange";
    case ErrorCode::InconsistentFlag: return "InconsistentFlag";
    case ErrorCode::ParseExhausted: return "ParseExhausted";
    case ErrorCode::EmptyQuestion: return "EmptyQuestion";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::DegenerateMarginals: return "DegenerateMarginals";
    case ErrorCode::OutOfRangeProbability: return "OutOfRangeProbability";
    case ErrorCode::NoProbabilityFound: return "NoProbabilityFound";
    case ErrorCode::MissingUpstream: return "MissingUpstream";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::UnknownDoc: return "UnknownDoc";
    case ErrorCode::IncompleteGold: return "IncompleteGold";
    case ErrorCode::Conflict: return "Conflict";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace leakaudit
