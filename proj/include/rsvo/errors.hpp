#pragma once

#include <stdexcept>
#include <string>

namespace rsvo {

// Base class for all library errors. Subclasses exist so callers can react
// to specific failure modes; the CLI maps them onto exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- geometry ---
struct NonPositiveDepth : Error {
  explicit NonPositiveDepth(const std::string& m = "point has non-positive depth") : Error(m) {}
};
struct NoConvergence : Error {
  explicit NoConvergence(const std::string& m = "fixed-point iteration did not converge") : Error(m) {}
};

// --- epipolar ---
struct DegenerateTranslation : Error {
  explicit DegenerateTranslation(const std::string& m = "translation norm below 1e-12") : Error(m) {}
};
struct SingularIntrinsics : Error {
  explicit SingularIntrinsics(const std::string& m = "intrinsic matrix is singular") : Error(m) {}
};
struct DegenerateDenominator : Error {
  explicit DegenerateDenominator(const std::string& m = "Sampson gradient vanished") : Error(m) {}
};
struct NumericalFailure : Error {
  explicit NumericalFailure(const std::string& m = "numerical failure") : Error(m) {}
};

// --- initializer ---
struct DegenerateCloud : Error {
  explicit DegenerateCloud(const std::string& m = "all points coincide") : Error(m) {}
};
struct RankDeficientDesign : Error {
  explicit RankDeficientDesign(const std::string& m = "DLT design matrix rank < 8") : Error(m) {}
};
struct CheiralityAmbiguous : Error {
  explicit CheiralityAmbiguous(const std::string& m = "no decomposition candidate wins cheirality") : Error(m) {}
};

// --- refiner / ransac ---
struct NonFiniteJacobian : Error {
  explicit NonFiniteJacobian(const std::string& m = "Jacobian contains non-finite entries") : Error(m) {}
};
struct InitializationFailed : Error {
  explicit InitializationFailed(const std::string& m = "initialization failed") : Error(m) {}
};
struct AllHypothesesDegenerate : Error {
  explicit AllHypothesesDegenerate(const std::string& m = "every hypothesis failed") : Error(m) {}
};

// --- synth ---
struct TooFewWaypoints : Error {
  explicit TooFewWaypoints(const std::string& m = "spline needs at least 4 waypoints") : Error(m) {}
};
struct InsufficientVisibility : Error {
  explicit InsufficientVisibility(const std::string& m = "too few jointly visible landmarks") : Error(m) {}
};

// --- io / cli ---
struct ConfigParseError : Error {
  explicit ConfigParseError(const std::string& m) : Error(m) {}
};
struct SchemaError : Error {
  explicit SchemaError(const std::string& m) : Error(m) {}
};
struct TooFewPoints : Error {
  explicit TooFewPoints(const std::string& m = "too few correspondences") : Error(m) {}
};
struct IoError : Error {
  explicit IoError(const std::string& m) : Error(m) {}
};

}  // namespace rsvo
