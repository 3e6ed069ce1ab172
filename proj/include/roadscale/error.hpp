#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace roadscale {

enum class Errc {
  InvalidDepth,
  BehindCamera,
  NoGroundIntersection,
  ShapeMismatch,
  InvalidArgument,
  TooFewPoints,
  DegenerateGeometry,
  TooFewInliers,
  NoRoadPixels,
  ImplausibleRoadPlane,
  NoGroundTruth,
  DegeneratePrediction,
  EmptyInput,
  InvalidScale,
  NoValidPixels,
  FormatError,
  MissingInput,
  IoError,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidDepth: return "InvalidDepth";
    case Errc::BehindCamera: return "BehindCamera";
    case Errc::NoGroundIntersection: return "NoGroundIntersection";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::TooFewPoints: return "TooFewPoints";
    case Errc::DegenerateGeometry: return "DegenerateGeometry";
    case Errc::TooFewInliers: return "TooFewInliers";
    case Errc::NoRoadPixels: return "NoRoadPixels";
    case Errc::ImplausibleRoadPlane: return "ImplausibleRoadPlane";
    case Errc::NoGroundTruth: return "NoGroundTruth";
    case Errc::DegeneratePrediction: return "DegeneratePrediction";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::InvalidScale: return "InvalidScale";
    case Errc::NoValidPixels: return "NoValidPixels";
    case Errc::FormatError: return "FormatError";
    case Errc::MissingInput: return "MissingInput";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable error code. Batch drivers record
/// `code()` per frame instead of aborting.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace roadscale
