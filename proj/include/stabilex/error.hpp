#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stabilex {

enum class ErrorKind {
  kInvalidConfig,
  kInvalidInput,
  kGenerationExhausted,
  kTrainingDiverged,
  kNumericalFailure,
  kNotCompatible,
  kDegenerateVector,
  kInsufficientData,
  kInvalidPairing,
  kInsufficientModels,
  kIngestRejected,
  kIo,
};

std::string_view to_string(ErrorKind kind);

// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace stabilex
