#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace duet {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Antisymmetric matrix such that skew(v) * w == v.cross(w).
Mat3 skew(const Vec3& v);

/// Vector of an antisymmetric matrix (inverse of skew on its image).
Vec3 unskew(const Mat3& m);

/// SO(3) exponential map. Rotation angle equals theta.norm().
/// Switches to a second-order series below 1e-8 rad.
Mat3 rodrigues(const Vec3& theta);

/// SO(3) logarithm, inverse of rodrigues for angles in [0, pi].
Vec3 rotation_log(const Mat3& R);

bool is_rotation(const Mat3& R, double tol = 1e-9);

/// Rigid transform. Composition and inverse follow the usual
/// camera-to-world convention: apply(p) = R * p + t.
struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static Pose identity() { return Pose{}; }
  Pose inverse() const { return Pose{R.transpose(), -(R.transpose() * t)}; }
  Vec3 apply(const Vec3& p) const { return R * p + t; }
};

inline Pose operator*(const Pose& a, const Pose& b) {
  return Pose{a.R * b.R, a.R * b.t + a.t};
}

/// A pose tagged with its acquisition time, the unit used along trajectories.
struct StampedPose {
  double timestamp = 0.0;
  Pose pose;
};

// se(3) tangent vectors are ordered (rotation, translation).
Vec6 se3_log(const Pose& T);
Pose se3_exp(const Vec6& xi);
Mat6 se3_adjoint(const Pose& T);

/// Inverse of the right Jacobian of the SE(3) exponential,
/// d/d(delta) Log(Exp(xi) Exp(delta)) at delta = 0.
Mat6 se3_right_jacobian_inverse(const Vec6& xi);

/// Pose interpolation: geodesic (slerp) on rotation, linear on translation.
/// alpha = 0 and alpha = 1 return the arguments bit-identically.
/// Throws std::invalid_argument when alpha is outside [0, 1].
Pose se3_interpolate(const Pose& a, const Pose& b, double alpha);

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;

  Mat3 matrix() const;
  Mat3 inverse_matrix() const;
  Vec2 project(const Vec3& cam_point) const;
  Vec3 back_project(const Vec2& pixel, double depth) const;
  bool operator==(const Intrinsics&) const = default;
};

/// E = K^T F K.
Mat3 essential_from_f(const Mat3& F, const Intrinsics& K);

/// Pixel correspondence: a in the first view, b in the second.
struct PixelMatch {
  Vec2 a;
  Vec2 b;
};

/// Normalized (Hartley) eight-point estimate of the fundamental matrix
/// with rank-2 enforcement. Returns F with unit Frobenius norm satisfying
/// b^T F a = 0. Throws std::invalid_argument for fewer than 8 matches and
/// std::runtime_error for degenerate configurations.
Mat3 eight_point(std::span<const PixelMatch> matches);

/// Inlier-mask hook: rows with a zero mask entry are excluded from the
/// solve. No robust estimator ships; the backbone provides outlier-free
/// matches and callers may pre-filter.
Mat3 eight_point(std::span<const PixelMatch> matches,
                 std::span<const std::uint8_t> inlier_mask);

/// Mean |b^T F a| over the matches, homogeneous pixels with w = 1.
double mean_epipolar_residual(const Mat3& F, std::span<const PixelMatch> matches);

/// Fundamental matrix of two cameras with camera-to-world poses Ta, Tb:
/// b^T F a = 0 for projections a (in camera A) and b (in camera B).
Mat3 fundamental_from_poses(const Intrinsics& Ka, const Pose& Ta,
                            const Intrinsics& Kb, const Pose& Tb);

using Vec4 = Eigen::Vector4d;

/// Unit quaternion as (qx, qy, qz, qw) with qw >= 0.
Vec4 rotation_to_quaternion(const Mat3& R);
Mat3 quaternion_to_rotation(const Vec4& q_xyzw);

}  // namespace duet
