#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qshift {

enum class ErrorKind {
  ZeroVector,
  DimMismatch,
  EmptyBatch,
  NonPositiveTemperature,
  InvalidK,
  IndexOutOfRange,
  EmptyQueue,
  SizeMismatch,
  NonPositiveThreshold,
  TooFewCandidates,
  SupportMismatch,
  LengthMismatch,
  UnknownBaseline,
  InvalidSpec,
  EmptyGroundTruth,
  MissingQuery,
  NonFinite,
  NotNormalized,
  IoError,
  BadConfig,
  BadInput,
  GradMismatch,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace qshift
