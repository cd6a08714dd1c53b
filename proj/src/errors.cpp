#include "qshift/errors.hpp"

namespace qshift {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::DimMismatch: return "DimMismatch";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorKind::InvalidK: return "InvalidK";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::EmptyQueue: return "EmptyQueue";
    case ErrorKind::SizeMismatch: return "SizeMismatch";
    case ErrorKind::NonPositiveThreshold: return "NonPositiveThreshold";
    case ErrorKind::TooFewCandidates: return "TooFewCandidates";
    case ErrorKind::SupportMismatch: return "SupportMismatch";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::UnknownBaseline: return "UnknownBaseline";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::EmptyGroundTruth: return "EmptyGroundTruth";
    case ErrorKind::MissingQuery: return "MissingQuery";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NotNormalized: return "NotNormalized";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::BadInput: return "BadInput";
    case ErrorKind::GradMismatch: return "GradMismatch";
  }
  return "Unknown";
}

}  // namespace qshift
