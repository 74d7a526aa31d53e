#include "kpnet/error.hpp"

namespace kpnet {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DegenerateCloud: return "DegenerateCloud";
    case ErrorCode::DegenerateLabels: return "DegenerateLabels";
    case ErrorCode::NoPositivePairs: return "NoPositivePairs";
    case ErrorCode::InsufficientModels: return "InsufficientModels";
    case ErrorCode::PerplexityTooLarge: return "PerplexityTooLarge";
    case ErrorCode::EmptyConsensus: return "EmptyConsensus";
    case ErrorCode::InvalidDecision: return "InvalidDecision";
    case ErrorCode::NoKeypoints: return "NoKeypoints";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace kpnet
