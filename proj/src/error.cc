#include "popup/error.h"

namespace popup {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::RayParallelToPlane: return "RayParallelToPlane";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::DegenerateEdge: return "DegenerateEdge";
    case ErrorCode::DegenerateVanishingPoints: return "DegenerateVanishingPoints";
    case ErrorCode::PreconditionViolation: return "PreconditionViolation";
    case ErrorCode::EmptyFrame: return "EmptyFrame";
    case ErrorCode::TooManyEdges: return "TooManyEdges";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::DegeneratePolygon: return "DegeneratePolygon";
    case ErrorCode::LabelMismatch: return "LabelMismatch";
    case ErrorCode::UnknownLandmark: return "UnknownLandmark";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace popup
