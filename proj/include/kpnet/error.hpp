#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kpnet {

enum class ErrorCode {
  DuplicateId,
  SchemaError,
  MissingFile,
  IoError,
  DegenerateCloud,
  DegenerateLabels,
  NoPositivePairs,
  InsufficientModels,
  PerplexityTooLarge,
  EmptyConsensus,
  InvalidDecision,
  NoKeypoints,
  InvalidConfig,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (CLI, HTTP layer) can map it to an exit status or response code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace kpnet
