#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hdrtm {

enum class ErrorKind {
  UnsupportedFormat,
  CorruptFile,
  AllZeroImage,
  InvalidImage,
  ShapeMismatch,
  TooSmall,
  IoError,
  ShapeNotDivisible,
  BufferShapeMismatch,
  BetaTooSmall,
  NotDivisible,
  TooFewNodes,
  TooSmallInput,
  LengthMismatch,
  EmptyBatch,
  BatchTooSmall,
  OddDimensions,
  NonFiniteComponent,
  TooFewFrames,
  EmptyDataset,
  CheckpointMismatch,
  EmptyPool,
  SourceTooSmall,
  InsufficientFrames,
  NonFiniteLoss,
  OomBudgetExceeded,
  InvalidConfig,
};

inline std::string_view to_string(ErrorKind kind);

/// Exception carrying a machine-checkable kind; the CLI maps kinds onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::CorruptFile: return "CorruptFile";
    case ErrorKind::AllZeroImage: return "AllZeroImage";
    case ErrorKind::InvalidImage: return "InvalidImage";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::TooSmall: return "TooSmall";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ShapeNotDivisible: return "ShapeNotDivisible";
    case ErrorKind::BufferShapeMismatch: return "BufferShapeMismatch";
    case ErrorKind::BetaTooSmall: return "BetaTooSmall";
    case ErrorKind::NotDivisible: return "NotDivisible";
    case ErrorKind::TooFewNodes: return "TooFewNodes";
    case ErrorKind::TooSmallInput: return "TooSmallInput";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::BatchTooSmall: return "BatchTooSmall";
    case ErrorKind::OddDimensions: return "OddDimensions";
    case ErrorKind::NonFiniteComponent: return "NonFiniteComponent";
    case ErrorKind::TooFewFrames: return "TooFewFrames";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::CheckpointMismatch: return "CheckpointMismatch";
    case ErrorKind::EmptyPool: return "EmptyPool";
    case ErrorKind::SourceTooSmall: return "SourceTooSmall";
    case ErrorKind::InsufficientFrames: return "InsufficientFrames";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::OomBudgetExceeded: return "OomBudgetExceeded";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace hdrtm
