#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace densewarp {

enum class ErrorCode {
  kNonFinite,
  kPointBehindCamera,
  kCoincidentCenters,
  kDegenerateLine,
  kDegenerateDenominator,
  kInvalidCamera,
  kBadDimensions,
  kEmptyChannel,
  kGroupShapeMismatch,
  kBadConfig,
  kRigMismatch,
  kShapeMismatch,
  kModeMismatch,
  kEmptyDataset,
  kDivergedLoss,
  kInsufficientViews,
  kDegenerateGeometry,
  kTooFewFrames,
  kOutOfOrderArrival,
  kBadPlan,
  kOutOfBounds,
  kLookAtDegenerate,
  kJointCountMismatch,
  kDegenerateConfiguration,
  kIo,
  kFormat,
};

std::string_view to_string(ErrorCode code);

// Every recoverable failure in the library is reported through this type; the
// code lets callers (the CLI in particular) map failures to exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace densewarp
