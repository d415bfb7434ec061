#include "stabilex/error.hpp"

namespace stabilex {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidConfig: return "invalid-config";
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kGenerationExhausted: return "generation-exhausted";
    case ErrorKind::kTrainingDiverged: return "training-diverged";
    case ErrorKind::kNumericalFailure: return "numerical-failure";
    case ErrorKind::kNotCompatible: return "not-compatible";
    case ErrorKind::kDegenerateVector: return "degenerate-vector";
    case ErrorKind::kInsufficientData: return "insufficient-data";
    case ErrorKind::kInvalidPairing: return "invalid-pairing";
    case ErrorKind::kInsufficientModels: return "insufficient-models";
    case ErrorKind::kIngestRejected: return "ingest-rejected";
    case ErrorKind::kIo: return "io-error";
  }
  return "unknown";
}

}  // namespace stabilex
