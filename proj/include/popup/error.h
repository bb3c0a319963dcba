#pragma once

#include <stdexcept>
#include <string>

namespace popup {

enum class ErrorCode {
  RayParallelToPlane,
  BehindCamera,
  DegenerateEdge,
  DegenerateVanishingPoints,
  PreconditionViolation,
  EmptyFrame,
  TooManyEdges,
  SingularSystem,
  DegeneratePolygon,
  LabelMismatch,
  UnknownLandmark,
  DimensionMismatch,
  InvalidSpec,
  LengthMismatch,
  ParseError,
  IoError,
};

const char* to_string(ErrorCode code);

// All library failures are reported through this type; `code()` identifies
// the failure class so callers can dispatch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace popup
