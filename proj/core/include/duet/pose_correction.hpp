#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "duet/geometry.hpp"

namespace duet {

/// Focal scaling error between an estimated and a reference intrinsic
/// matrix: S = diag(sx, sy, 1), Delta = S - I. Principal points are
/// treated as shared; their differences do not enter the correction.
struct ScalingError {
  double sx = 1.0;
  double sy = 1.0;

  Mat3 scaling() const {
    Mat3 s = Mat3::Identity();
    s(0, 0) = sx;
    s(1, 1) = sy;
    return s;
  }
  Mat3 deviation() const { return scaling() - Mat3::Identity(); }

  /// Delta' = lambda * Delta.
  ScalingError damped(double lambda) const {
    return ScalingError{1.0 + lambda * (sx - 1.0), 1.0 + lambda * (sy - 1.0)};
  }

  double max_error() const {
    return std::max(std::abs(sx - 1.0), std::abs(sy - 1.0));
  }
};

/// sx = fx_est / fx_global, sy = fy_est / fy_global.
/// Throws std::invalid_argument on non-positive ratios.
ScalingError scaling_from_intrinsics(const Intrinsics& k_est,
                                     const Intrinsics& k_global);

struct CorrectionOptions {
  double rotation_switch = 5.0 * M_PI / 180.0;  // simplified vs general branch
  double min_translation = 1e-6;                // rotation-correction guard
  bool translation_enabled = true;
  bool rotation_enabled = true;
};

/// Theta = [t_est]x ((R Delta R^T - Delta) t_est) / ||t_est||^2, the
/// closed-form rotation error induced by the focal scaling Delta.
Vec3 rotation_error_vector(const Mat3& r, const Vec3& t_est, const Mat3& delta);

/// Near-identity rotations use t = S t_est; otherwise the distortion matrix
/// M = S^-1 [t_est]x R_est S^-1 R_est^T is reduced to its antisymmetric part
/// and the extracted vector renormalized by sx sy.
Vec3 correct_translation(const Vec3& t_est, const ScalingError& s,
                         const Mat3& r_est,
                         const CorrectionOptions& opt = {});

struct RotationCorrection {
  Mat3 rotation;
  Vec3 theta = Vec3::Zero();
  bool skipped = false;  // ||t_est|| below the guard
};

/// R = Rodrigues(Theta)^T R_est. Theta is orthogonal to t_est by
/// construction. Steps with ||t_est|| <= min_translation are passed
/// through unchanged and flagged.
RotationCorrection correct_rotation(const Mat3& r_est, const Vec3& t_est,
                                    const ScalingError& s,
                                    const CorrectionOptions& opt = {});

struct CorrectedStep {
  Pose estimated;
  Pose corrected;
  Vec3 theta = Vec3::Zero();
  bool general_branch = false;
  bool rotation_skipped = false;
  double lambda = 0.0;
};

CorrectedStep correct_step(const Pose& estimated, const ScalingError& damped,
                           const CorrectionOptions& opt = {});

/// One relative motion of the primary chain together with the intrinsics
/// estimate of the sub-map it came from.
struct OdometryStep {
  Pose motion;  // T_{i-1,i}, scale-rectified
  Intrinsics k_est;
};

/// Corrects every step with the lambda-damped scaling against k_global and
/// chains left to right from `start`. Raw steps are never modified; calling
/// again with a new k_global or lambda reproduces the chain from scratch.
std::vector<Pose> rectify_primary_chain(const Pose& start,
                                        std::span<const OdometryStep> steps,
                                        const Intrinsics& k_global,
                                        double lambda,
                                        const CorrectionOptions& opt = {},
                                        std::vector<CorrectedStep>* log = nullptr);

/// Raw assistant observation: the backbone pose of the assistant frame
/// relative to its primary reference at `reference_time`.
struct AssistantObservation {
  double timestamp = 0.0;
  double reference_time = 0.0;
  Pose relative_to_reference;
  ScalingError primary_scaling;
  ScalingError assistant_scaling;
};

/// Places each assistant observation against the rectified primary
/// trajectory (exact timestamp match or SE(3) interpolation) and corrects
/// the relative motion with S_joint, the elementwise mean of the primary
/// and assistant scalings. Throws std::out_of_range when a reference time
/// falls outside the primary trajectory span.
std::vector<StampedPose> rectify_assistant_chain(
    std::span<const StampedPose> primary_world,
    std::span<const AssistantObservation> observations, double lambda,
    const CorrectionOptions& opt = {});

/// Per-step diagnostics: theta magnitude, branch taken, lambda.
void write_correction_log(const std::string& path,
                          std::span<const CorrectedStep> steps);

}  // namespace duet
