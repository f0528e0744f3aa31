#include "densewarp/error.hpp"

namespace densewarp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kPointBehindCamera: return "PointBehindCamera";
    case ErrorCode::kCoincidentCenters: return "CoincidentCenters";
    case ErrorCode::kDegenerateLine: return "DegenerateLine";
    case ErrorCode::kDegenerateDenominator: return "DegenerateDenominator";
    case ErrorCode::kInvalidCamera: return "InvalidCamera";
    case ErrorCode::kBadDimensions: return "BadDimensions";
    case ErrorCode::kEmptyChannel: return "EmptyChannel";
    case ErrorCode::kGroupShapeMismatch: return "GroupShapeMismatch";
    case ErrorCode::kBadConfig: return "BadConfig";
    case ErrorCode::kRigMismatch: return "RigMismatch";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kModeMismatch: return "ModeMismatch";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kDivergedLoss: return "DivergedLoss";
    case ErrorCode::kInsufficientViews: return "InsufficientViews";
    case ErrorCode::kDegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::kTooFewFrames: return "TooFewFrames";
    case ErrorCode::kOutOfOrderArrival: return "OutOfOrderArrival";
    case ErrorCode::kBadPlan: return "BadPlan";
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kLookAtDegenerate: return "LookAtDegenerate";
    case ErrorCode::kJointCountMismatch: return "JointCountMismatch";
    case ErrorCode::kDegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kFormat: return "FormatError";
  }
  return "Unknown";
}

}  // namespace densewarp
