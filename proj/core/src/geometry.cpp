#include "duet/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Geometry>
#include <Eigen/SVD>

namespace duet {

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
      -v.y(), v.x(), 0.0;
  return m;
}

Vec3 unskew(const Mat3& m) {
  return Vec3(m(2, 1), m(0, 2), m(1, 0));
}

Mat3 rodrigues(const Vec3& theta) {
  const double angle = theta.norm();
  const Mat3 w = skew(theta);
  if (angle < 1e-8) {
    return Mat3::Identity() + w + 0.5 * w * w;
  }
  const double s = std::sin(angle) / angle;
  const double c = (1.0 - std::cos(angle)) / (angle * angle);
  return Mat3::Identity() + s * w + c * w * w;
}

Vec3 rotation_log(const Mat3& R) {
  const double cos_angle = std::clamp((R.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double angle = std::acos(cos_angle);
  const Vec3 v = unskew((R - R.transpose()) * 0.5);  // sin(angle) * axis

  if (angle < 1e-8) {
    // log(R) = v * (1 + angle^2/6 + ...) near identity
    return v * (1.0 + angle * angle / 6.0);
  }
  if (angle > M_PI - 1e-6) {
    // Near pi the antisymmetric part vanishes; recover the axis from the
    // symmetric part R = I + 2 sin^2(angle/2) (n n^T - I) + ...
    const Mat3 B = (R + Mat3::Identity()) * 0.5;  // ~ n n^T at angle = pi
    int k = 0;
    B.diagonal().maxCoeff(&k);
    Vec3 axis = B.col(k) / std::sqrt(std::max(B(k, k), 1e-18));
    axis.normalize();
    if (axis.dot(v) < 0.0) axis = -axis;
    return angle * axis;
  }
  return v * (angle / std::sin(angle));
}

bool is_rotation(const Mat3& R, double tol) {
  const double ortho = (R * R.transpose() - Mat3::Identity()).norm();
  return ortho <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

namespace {

// V(theta) with R = exp([theta]x), t = V * rho.
Mat3 se3_v_matrix(const Vec3& theta) {
  const double angle = theta.norm();
  const Mat3 w = skew(theta);
  if (angle < 1e-8) {
    return Mat3::Identity() + 0.5 * w + w * w / 6.0;
  }
  const double a2 = angle * angle;
  const double b = (1.0 - std::cos(angle)) / a2;
  const double c = (angle - std::sin(angle)) / (a2 * angle);
  return Mat3::Identity() + b * w + c * w * w;
}

Mat3 se3_v_inverse(const Vec3& theta) {
  const double angle = theta.norm();
  const Mat3 w = skew(theta);
  if (angle < 1e-8) {
    return Mat3::Identity() - 0.5 * w + w * w / 12.0;
  }
  const double a2 = angle * angle;
  const double coeff =
      (1.0 - 0.5 * angle * std::sin(angle) / (1.0 - std::cos(angle))) / a2;
  return Mat3::Identity() - 0.5 * w + coeff * w * w;
}

Mat6 se3_ad(const Vec6& xi) {
  const Mat3 wr = skew(xi.head<3>());
  const Mat3 wt = skew(xi.tail<3>());
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = wr;
  ad.bottomLeftCorner<3, 3>() = wt;
  ad.bottomRightCorner<3, 3>() = wr;
  return ad;
}

}  // namespace

Vec6 se3_log(const Pose& T) {
  Vec6 xi;
  const Vec3 theta = rotation_log(T.R);
  xi.head<3>() = theta;
  xi.tail<3>() = se3_v_inverse(theta) * T.t;
  return xi;
}

Pose se3_exp(const Vec6& xi) {
  const Vec3 theta = xi.head<3>();
  return Pose{rodrigues(theta), se3_v_matrix(theta) * xi.tail<3>()};
}

Mat6 se3_adjoint(const Pose& T) {
  Mat6 ad = Mat6::Zero();
  ad.topLeftCorner<3, 3>() = T.R;
  ad.bottomLeftCorner<3, 3>() = skew(T.t) * T.R;
  ad.bottomRightCorner<3, 3>() = T.R;
  return ad;
}

Mat6 se3_right_jacobian_inverse(const Vec6& xi) {
  // Truncated Bernoulli series J_r^{-1} = I + ad/2 + sum B_2k/(2k)! ad^{2k}.
  // Accurate to ~1e-7 for |rotation| up to ~1.5 rad, which covers every
  // residual this project differentiates.
  static const double kCoeffs[] = {
      1.0 / 12.0, -1.0 / 720.0, 1.0 / 30240.0, -1.0 / 1209600.0,
      1.0 / 47900160.0, -691.0 / 1307674368000.0};
  const Mat6 ad = se3_ad(xi);
  const Mat6 ad2 = ad * ad;
  Mat6 out = Mat6::Identity() + 0.5 * ad;
  Mat6 power = ad2;
  for (double c : kCoeffs) {
    out += c * power;
    power = power * ad2;
  }
  return out;
}

Pose se3_interpolate(const Pose& a, const Pose& b, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("se3_interpolate: alpha outside [0, 1]");
  }
  if (alpha == 0.0) return a;
  if (alpha == 1.0) return b;
  const Vec3 delta = rotation_log(a.R.transpose() * b.R);
  Pose out;
  out.R = a.R * rodrigues(alpha * delta);
  out.t = (1.0 - alpha) * a.t + alpha * b.t;
  return out;
}

Mat3 Intrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx,
       0.0, fy, cy,
       0.0, 0.0, 1.0;
  return k;
}

Mat3 Intrinsics::inverse_matrix() const {
  Mat3 k;
  k << 1.0 / fx, 0.0, -cx / fx,
       0.0, 1.0 / fy, -cy / fy,
       0.0, 0.0, 1.0;
  return k;
}

Vec2 Intrinsics::project(const Vec3& cam_point) const {
  return Vec2(fx * cam_point.x() / cam_point.z() + cx,
              fy * cam_point.y() / cam_point.z() + cy);
}

Vec3 Intrinsics::back_project(const Vec2& pixel, double depth) const {
  return Vec3((pixel.x() - cx) / fx * depth, (pixel.y() - cy) / fy * depth,
              depth);
}

Mat3 essential_from_f(const Mat3& F, const Intrinsics& K) {
  const Mat3 k = K.matrix();
  return k.transpose() * F * k;
}

namespace {

// Centroid shift plus isotropic scaling to mean distance sqrt(2).
Mat3 hartley_normalization(std::span<const PixelMatch> matches, bool second) {
  Vec2 centroid = Vec2::Zero();
  for (const auto& m : matches) centroid += second ? m.b : m.a;
  centroid /= static_cast<double>(matches.size());
  double mean_dist = 0.0;
  for (const auto& m : matches) {
    mean_dist += ((second ? m.b : m.a) - centroid).norm();
  }
  mean_dist /= static_cast<double>(matches.size());
  if (mean_dist < 1e-12) {
    throw std::runtime_error("eight_point: degenerate configuration (coincident points)");
  }
  const double s = std::sqrt(2.0) / mean_dist;
  Mat3 T;
  T << s, 0.0, -s * centroid.x(),
       0.0, s, -s * centroid.y(),
       0.0, 0.0, 1.0;
  return T;
}

}  // namespace

Mat3 eight_point(std::span<const PixelMatch> matches) {
  const auto n = matches.size();
  if (n < 8) {
    throw std::invalid_argument("eight_point: at least 8 matches required");
  }

  const Mat3 T1 = hartley_normalization(matches, false);
  const Mat3 T2 = hartley_normalization(matches, true);

  Eigen::MatrixXd A(static_cast<Eigen::Index>(n), 9);
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    const Vec3 a = T1 * matches[static_cast<size_t>(i)].a.homogeneous();
    const Vec3 b = T2 * matches[static_cast<size_t>(i)].b.homogeneous();
    A.row(i) << b.x() * a.x(), b.x() * a.y(), b.x(),
                b.y() * a.x(), b.y() * a.y(), b.y(),
                a.x(), a.y(), 1.0;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A unique F needs rank 8; a larger nullspace means zero parallax or a
  // similarly degenerate configuration.
  if (sv(7) < 1e-9 * sv(0)) {
    throw std::runtime_error("eight_point: degenerate configuration (rank-deficient system)");
  }

  const Eigen::Matrix<double, 9, 1> f = svd.matrixV().col(8);
  Mat3 Fn;
  Fn << f(0), f(1), f(2),
        f(3), f(4), f(5),
        f(6), f(7), f(8);

  Eigen::JacobiSVD<Mat3> fsvd(Fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 d = fsvd.singularValues();
  d(2) = 0.0;
  Fn = fsvd.matrixU() * d.asDiagonal() * fsvd.matrixV().transpose();

  Mat3 F = T2.transpose() * Fn * T1;
  F /= F.norm();
  // Deterministic sign: largest-magnitude entry positive.
  Eigen::Index r = 0, c = 0;
  F.cwiseAbs().maxCoeff(&r, &c);
  if (F(r, c) < 0.0) F = -F;
  return F;
}

Mat3 eight_point(std::span<const PixelMatch> matches,
                 std::span<const std::uint8_t> inlier_mask) {
  if (inlier_mask.size() != matches.size()) {
    throw std::invalid_argument("eight_point: mask size mismatch");
  }
  std::vector<PixelMatch> kept;
  kept.reserve(matches.size());
  for (size_t i = 0; i < matches.size(); ++i) {
    if (inlier_mask[i]) kept.push_back(matches[i]);
  }
  return eight_point(kept);
}

double mean_epipolar_residual(const Mat3& F, std::span<const PixelMatch> matches) {
  double sum = 0.0;
  for (const auto& m : matches) {
    sum += std::abs(m.b.homogeneous().dot(F * m.a.homogeneous()));
  }
  return matches.empty() ? 0.0 : sum / static_cast<double>(matches.size());
}

Vec4 rotation_to_quaternion(const Mat3& R) {
  Eigen::Quaterniond q(R);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return Vec4(q.x(), q.y(), q.z(), q.w());
}

Mat3 quaternion_to_rotation(const Vec4& q_xyzw) {
  Eigen::Quaterniond q(q_xyzw(3), q_xyzw(0), q_xyzw(1), q_xyzw(2));
  q.normalize();
  return q.toRotationMatrix();
}

Mat3 fundamental_from_poses(const Intrinsics& Ka, const Pose& Ta,
                            const Intrinsics& Kb, const Pose& Tb) {
  // Points in camera B relate to camera A by X_b = R X_a + t with
  // R = Rb^T Ra, t = Rb^T (ta - tb); hence E = [t]x R and F = Kb^-T E Ka^-1.
  const Mat3 R = Tb.R.transpose() * Ta.R;
  const Vec3 t = Tb.R.transpose() * (Ta.t - Tb.t);
  const Mat3 E = skew(t) * R;
  return Kb.inverse_matrix().transpose() * E * Ka.inverse_matrix();
}

}  // namespace duet
