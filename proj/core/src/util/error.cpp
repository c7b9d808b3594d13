#include "capri/error.hpp"

namespace capri {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
    case ErrorCode::MissingImage: return "MissingImage";
    case ErrorCode::MalformedRow: return "MalformedRow";
    case ErrorCode::EmptyCatalog: return "EmptyCatalog";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::UndecodableImage: return "UndecodableImage";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::IndexOutOfVocab: return "IndexOutOfVocab";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::ConstantTargets: return "ConstantTargets";
    case ErrorCode::FormatVersionMismatch: return "FormatVersionMismatch";
    case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorCode::UnknownLevel: return "UnknownLevel";
    case ErrorCode::RecordNotFound: return "RecordNotFound";
    case ErrorCode::MalformedScenario: return "MalformedScenario";
    case ErrorCode::DegenerateMatrix: return "DegenerateMatrix";
    case ErrorCode::AllZeroDifferences: return "AllZeroDifferences";
    case ErrorCode::ConstantColumn: return "ConstantColumn";
  }
  return "Unknown";
}

bool is_data_error(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Io:
    case ErrorCode::MissingImage:
    case ErrorCode::MalformedRow:
    case ErrorCode::EmptyCatalog:
    case ErrorCode::TooFewRecords:
    case ErrorCode::UndecodableImage:
    case ErrorCode::FormatVersionMismatch:
    case ErrorCode::CorruptCheckpoint:
    case ErrorCode::UnknownLevel:
    case ErrorCode::RecordNotFound:
    case ErrorCode::MalformedScenario:
    case ErrorCode::DegenerateMatrix:
    case ErrorCode::AllZeroDifferences:
    case ErrorCode::ConstantTargets:
    case ErrorCode::EmptyDataset:
    case ErrorCode::IndexOutOfVocab:
    case ErrorCode::UnknownNode:
    case ErrorCode::ConstantColumn:
      return true;
    default:
      return false;
  }
}

}  // namespace capri
