#pragma once

#include <stdexcept>
#include <string>

namespace pses {

// Base class for everything thrown by the library.
struct EngineError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Operand shapes or axes are inconsistent.
struct ShapeError : EngineError {
  using EngineError::EngineError;
};

// A spatial computation produced an impossible geometry (e.g. nonpositive
// convolution output extent, patch size that does not divide the map).
struct GeometryError : EngineError {
  using EngineError::EngineError;
};

// Invalid configuration values.
struct ConfigError : EngineError {
  using EngineError::EngineError;
};

// An operation contract was violated (non-scalar loss, non-binary ground
// truth, degenerate batch-norm statistics, ...).
struct ContractError : EngineError {
  using EngineError::EngineError;
};

// Dataset or image ingestion failure.
struct IngestionError : EngineError {
  using EngineError::EngineError;
};

// Checkpoint serialization failure (bad magic, truncated file, mismatch).
struct CheckpointError : EngineError {
  using EngineError::EngineError;
};

}  // namespace pses
