#pragma once

#include <stdexcept>
#include <string>

namespace taskdb {

enum class ErrorCode {
  // tensor
  ShapeMismatch,
  EmptyShape,
  OutOfBounds,
  RankMismatch,
  CorruptFrame,
  // model repository
  DuplicateNameVersion,
  UnknownBaseModel,
  NonContiguousLayers,
  MalformedEndpoint,
  ChecksumMismatch,
  MissingLayer,
  NotDecoupled,
  UnknownLayer,
  UnknownModel,
  // selection
  RankTooLarge,
  NegativeEntry,
  DimensionMismatch,
  FewerThanTwoSamples,
  EmptyScoreList,
  UnknownTask,
  // backends
  NoDevices,
  Timeout,
  QuotaExhausted,
  TransportError,
  // planner
  SyntaxError,
  UnknownTable,
  UnknownColumn,
  CycleDetected,
  MissingProfile,
  NoFeasibleBatch,
  DuplicateTask,
  SelectionUnavailable,
  // executor
  ExtractorFailure,
  // generic
  IoError,
  InvalidArgument,
};

const char* error_code_name(ErrorCode code);

// Single exception type for the whole engine. Callers that care about the
// failure kind branch on code(); everything else just reads what().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyShape: return "EmptyShape";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::RankMismatch: return "RankMismatch";
    case ErrorCode::CorruptFrame: return "CorruptFrame";
    case ErrorCode::DuplicateNameVersion: return "DuplicateNameVersion";
    case ErrorCode::UnknownBaseModel: return "UnknownBaseModel";
    case ErrorCode::NonContiguousLayers: return "NonContiguousLayers";
    case ErrorCode::MalformedEndpoint: return "MalformedEndpoint";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::MissingLayer: return "MissingLayer";
    case ErrorCode::NotDecoupled: return "NotDecoupled";
    case ErrorCode::UnknownLayer: return "UnknownLayer";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::RankTooLarge: return "RankTooLarge";
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::FewerThanTwoSamples: return "FewerThanTwoSamples";
    case ErrorCode::EmptyScoreList: return "EmptyScoreList";
    case ErrorCode::UnknownTask: return "UnknownTask";
    case ErrorCode::NoDevices: return "NoDevices";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::QuotaExhausted: return "QuotaExhausted";
    case ErrorCode::TransportError: return "TransportError";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnknownTable: return "UnknownTable";
    case ErrorCode::UnknownColumn: return "UnknownColumn";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::MissingProfile: return "MissingProfile";
    case ErrorCode::NoFeasibleBatch: return "NoFeasibleBatch";
    case ErrorCode::DuplicateTask: return "DuplicateTask";
    case ErrorCode::SelectionUnavailable: return "SelectionUnavailable";
    case ErrorCode::ExtractorFailure: return "ExtractorFailure";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "UnknownError";
}

}  // namespace taskdb
