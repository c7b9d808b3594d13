#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace capri {

enum class ErrorCode {
  InvalidArgument,
  Io,
  // dataset
  MissingImage,
  MalformedRow,
  EmptyCatalog,
  TooFewRecords,
  UndecodableImage,
  // scm
  UnknownNode,
  // model / training
  IndexOutOfVocab,
  ShapeMismatch,
  NonFiniteLoss,
  EmptyDataset,
  ConstantTargets,
  FormatVersionMismatch,
  CorruptCheckpoint,
  // causal
  UnknownLevel,
  RecordNotFound,
  MalformedScenario,
  // stats
  DegenerateMatrix,
  AllZeroDifferences,
  ConstantColumn,
};

std::string_view to_string(ErrorCode code) noexcept;

/// True for errors caused by bad input data rather than a failed computation.
bool is_data_error(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace capri
