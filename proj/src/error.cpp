#include "xai/error.hpp"

namespace xai {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::DataUnavailable: return "DataUnavailable";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::DegenerateSplit: return "DegenerateSplit";
    case ErrorKind::EmptyColumn: return "EmptyColumn";
    case ErrorKind::AllMissing: return "AllMissing";
    case ErrorKind::DegenerateRange: return "DegenerateRange";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::NonPositiveInput: return "NonPositiveInput";
    case ErrorKind::PlanState: return "PlanState";
    case ErrorKind::NegativeInput: return "NegativeInput";
    case ErrorKind::KOutOfRange: return "KOutOfRange";
    case ErrorKind::EigenFailure: return "EigenFailure";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::KernelTooLarge: return "KernelTooLarge";
    case ErrorKind::InvalidRate: return "InvalidRate";
    case ErrorKind::KTooLarge: return "KTooLarge";
    case ErrorKind::CheckpointIoError: return "CheckpointIoError";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::EmptyBackground: return "EmptyBackground";
    case ErrorKind::TooManyFeatures: return "TooManyFeatures";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::DegeneratePerturbations: return "DegeneratePerturbations";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::MissingArtifact: return "MissingArtifact";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

}  // namespace xai
