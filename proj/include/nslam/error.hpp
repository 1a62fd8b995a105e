#pragma once

#include <stdexcept>
#include <string>

namespace nslam {

enum class Errc {
  NonRigidInput,
  PixelOutOfBounds,
  OutOfUnitCube,
  OutOfBounds,
  TapeMismatch,
  EmptyBatch,
  NonFiniteGradient,
  EmptyDatabase,
  DuplicateKeyframe,
  EmptySurface,
  EmptyMesh,
  NoValidViews,
  LengthMismatch,
  MissingFile,
  NoAssociations,
  DatasetError,
  ConfigError,
  CameraInsideGeometry,
  FormatError,
};

const char* errc_name(Errc code);

// Single exception type for the library; `code()` identifies the failure.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::NonRigidInput: return "NonRigidInput";
    case Errc::PixelOutOfBounds: return "PixelOutOfBounds";
    case Errc::OutOfUnitCube: return "OutOfUnitCube";
    case Errc::OutOfBounds: return "OutOfBounds";
    case Errc::TapeMismatch: return "TapeMismatch";
    case Errc::EmptyBatch: return "EmptyBatch";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::EmptyDatabase: return "EmptyDatabase";
    case Errc::DuplicateKeyframe: return "DuplicateKeyframe";
    case Errc::EmptySurface: return "EmptySurface";
    case Errc::EmptyMesh: return "EmptyMesh";
    case Errc::NoValidViews: return "NoValidViews";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::MissingFile: return "MissingFile";
    case Errc::NoAssociations: return "NoAssociations";
    case Errc::DatasetError: return "DatasetError";
    case Errc::ConfigError: return "ConfigError";
    case Errc::CameraInsideGeometry: return "CameraInsideGeometry";
    case Errc::FormatError: return "FormatError";
  }
  return "Unknown";
}

}  // namespace nslam
