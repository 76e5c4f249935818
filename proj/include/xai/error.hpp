#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xai {

// Every failure the library reports carries one of these kinds so the CLI can
// map it onto an exit code and tests can assert on it without string matching.
enum class ErrorKind {
  // dataset
  DataUnavailable,
  MissingColumn,
  ParseError,
  EmptyFile,
  UnknownLabel,
  DegenerateSplit,
  // preprocess
  EmptyColumn,
  AllMissing,
  DegenerateRange,
  ZeroVariance,
  NonPositiveInput,
  PlanState,
  // featsel
  NegativeInput,
  KOutOfRange,
  EigenFailure,
  // nn
  ShapeMismatch,
  KernelTooLarge,
  InvalidRate,
  // tune
  KTooLarge,
  CheckpointIoError,
  // metrics
  LengthMismatch,
  SingleClass,
  // explain
  EmptyBackground,
  TooManyFeatures,
  SingularSystem,
  DegeneratePerturbations,
  // cli / persistence
  ConfigError,
  MissingArtifact,
  IoError,
  ChecksumMismatch,
  VersionMismatch,
  InvalidArgument,
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

}  // namespace xai
