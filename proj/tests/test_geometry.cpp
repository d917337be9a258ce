#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Geometry>
#include <cmath>
#include <vector>

#include "duet/geometry.hpp"
#include "test_util.hpp"

using namespace duet;

TEST_CASE("skew basics") {
  CHECK(skew(Vec3::Zero()).isZero(0.0));

  Mat3 expected;
  expected << 0, -1, 0,
              1, 0, 0,
              0, 0, 0;
  CHECK((skew(Vec3(0, 0, 1)) - expected).norm() == doctest::Approx(0.0));

  const Vec3 v(1, 2, 3);
  const Vec3 w(4, 5, 6);
  const Vec3 cross = skew(v) * w;
  CHECK(cross.x() == doctest::Approx(-3.0));
  CHECK(cross.y() == doctest::Approx(6.0));
  CHECK(cross.z() == doctest::Approx(-3.0));
}

TEST_CASE("skew annihilates its own axis") {
  auto gen = testutil::rng(7);
  for (int i = 0; i < 100; ++i) {
    const Vec3 v = testutil::random_vec3(gen, 10.0);
    CHECK((skew(v) * v).norm() <= 1e-12 * std::max(1.0, v.squaredNorm()));
    CHECK((skew(v) + skew(v).transpose()).isZero(0.0));
  }
}

TEST_CASE("rodrigues identity and axis cases") {
  CHECK((rodrigues(Vec3::Zero()) - Mat3::Identity()).norm() == doctest::Approx(0.0));

  const Mat3 Rz = rodrigues(Vec3(0, 0, M_PI / 2));
  const Vec3 rotated = Rz * Vec3(1, 0, 0);
  CHECK((rotated - Vec3(0, 1, 0)).norm() < 1e-12);
}

TEST_CASE("rodrigues round trip through the log map") {
  const Vec3 theta(0.1, 0.2, 0.3);
  const Vec3 back = rotation_log(rodrigues(theta));
  CHECK((back - theta).norm() < 1e-10);

  auto gen = testutil::rng(11);
  for (int i = 0; i < 200; ++i) {
    const Vec3 t = testutil::random_vec3(gen, 1.0);
    CHECK((rotation_log(rodrigues(t)) - t).norm() < 1e-10);
  }
  // Angles near pi exercise the symmetric-part branch.
  for (int i = 0; i < 50; ++i) {
    Vec3 axis = testutil::random_vec3(gen, 1.0);
    if (axis.norm() < 1e-6) axis = Vec3::UnitZ();
    axis.normalize();
    const Vec3 t = axis * (M_PI - 1e-8);
    const Mat3 R = rodrigues(t);
    CHECK((rodrigues(rotation_log(R)) - R).norm() < 1e-7);
  }
}

TEST_CASE("rodrigues transpose equals negated argument") {
  auto gen = testutil::rng(13);
  for (int i = 0; i < 100; ++i) {
    const Vec3 t = testutil::random_vec3(gen, 2.0);
    CHECK((rodrigues(t).transpose() - rodrigues(-t)).norm() < 1e-12);
  }
}

TEST_CASE("pose inverse and associativity") {
  auto gen = testutil::rng(17);
  for (int i = 0; i < 100; ++i) {
    const Pose p = testutil::random_pose(gen, 5.0);
    const Pose q = testutil::random_pose(gen, 5.0);
    const Pose r = testutil::random_pose(gen, 5.0);

    const Pose id = p * p.inverse();
    CHECK((id.R - Mat3::Identity()).norm() < 1e-9);
    CHECK(id.t.norm() < 1e-9);

    const Pose ab_c = (p * q) * r;
    const Pose a_bc = p * (q * r);
    CHECK((ab_c.R - a_bc.R).norm() < 1e-12);
    CHECK((ab_c.t - a_bc.t).norm() < 1e-11);
  }
}

TEST_CASE("se3 exp/log round trip and adjoint") {
  auto gen = testutil::rng(19);
  for (int i = 0; i < 100; ++i) {
    Vec6 xi;
    xi.head<3>() = testutil::random_vec3(gen, 1.5);
    xi.tail<3>() = testutil::random_vec3(gen, 3.0);
    CHECK((se3_log(se3_exp(xi)) - xi).norm() < 1e-9);

    const Pose T = testutil::random_pose(gen, 2.0);
    Vec6 delta;
    delta.head<3>() = testutil::random_vec3(gen, 0.4);
    delta.tail<3>() = testutil::random_vec3(gen, 0.4);
    // Exp(Ad(T) xi) == T Exp(xi) T^{-1}
    const Pose lhs = se3_exp(se3_adjoint(T) * delta);
    const Pose rhs = T * se3_exp(delta) * T.inverse();
    CHECK((lhs.R - rhs.R).norm() < 1e-9);
    CHECK((lhs.t - rhs.t).norm() < 1e-9);
  }
}

TEST_CASE("se3 right jacobian inverse matches finite differences") {
  auto gen = testutil::rng(23);
  for (int i = 0; i < 20; ++i) {
    Vec6 xi;
    xi.head<3>() = testutil::random_vec3(gen, 1.0);
    xi.tail<3>() = testutil::random_vec3(gen, 2.0);
    const Mat6 J = se3_right_jacobian_inverse(xi);

    const double h = 1e-6;
    Mat6 fd;
    for (int k = 0; k < 6; ++k) {
      Vec6 dp = Vec6::Zero();
      dp(k) = h;
      const Vec6 plus = se3_log(se3_exp(xi) * se3_exp(dp));
      const Vec6 minus = se3_log(se3_exp(xi) * se3_exp(-dp));
      fd.col(k) = (plus - minus) / (2.0 * h);
    }
    CHECK((J - fd).norm() / std::max(1.0, fd.norm()) < 1e-5);
  }
}

TEST_CASE("se3_interpolate endpoints and linear case") {
  auto gen = testutil::rng(29);
  const Pose a = testutil::random_pose(gen, 2.0);
  const Pose b = testutil::random_pose(gen, 2.0);

  const Pose at0 = se3_interpolate(a, b, 0.0);
  CHECK(at0.R == a.R);
  CHECK(at0.t == a.t);
  const Pose at1 = se3_interpolate(a, b, 1.0);
  CHECK(at1.R == b.R);
  CHECK(at1.t == b.t);

  const Pose p0{Mat3::Identity(), Vec3(0, 0, 0)};
  const Pose p1{Mat3::Identity(), Vec3(2, 0, 0)};
  const Pose mid = se3_interpolate(p0, p1, 0.5);
  CHECK((mid.t - Vec3(1, 0, 0)).norm() < 1e-15);

  CHECK_THROWS_AS(se3_interpolate(a, b, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(se3_interpolate(a, b, 1.1), std::invalid_argument);
}

TEST_CASE("se3_interpolate rotation matches quaternion slerp") {
  const Pose a{Mat3::Identity(), Vec3::Zero()};
  const Pose b{rodrigues(Vec3(0, 0, M_PI / 2)), Vec3::Zero()};
  const Pose mid = se3_interpolate(a, b, 0.5);

  const Eigen::Quaterniond qa(a.R);
  const Eigen::Quaterniond qb(b.R);
  const Mat3 slerped = qa.slerp(0.5, qb).toRotationMatrix();
  CHECK((mid.R - slerped).norm() < 1e-9);
  CHECK((mid.R - rodrigues(Vec3(0, 0, M_PI / 4))).norm() < 1e-9);

  auto gen = testutil::rng(31);
  for (int i = 0; i < 50; ++i) {
    const Pose x = testutil::random_pose(gen);
    const Pose y = testutil::random_pose(gen);
    std::uniform_real_distribution<double> ad(0.0, 1.0);
    const double alpha = ad(gen);
    const Mat3 ours = se3_interpolate(x, y, alpha).R;
    const Mat3 ref = Eigen::Quaterniond(x.R)
                         .slerp(alpha, Eigen::Quaterniond(y.R))
                         .toRotationMatrix();
    CHECK((ours - ref).norm() < 1e-9);
  }
}

TEST_CASE("se3_interpolate stays orthonormal on a fine grid") {
  auto gen = testutil::rng(37);
  const Pose a = testutil::random_pose(gen, 3.0);
  const Pose b = testutil::random_pose(gen, 3.0);
  for (int i = 0; i <= 100; ++i) {
    const Pose p = se3_interpolate(a, b, i / 100.0);
    CHECK(is_rotation(p.R, 1e-9));
  }
}

TEST_CASE("essential_from_f") {
  auto gen = testutil::rng(41);
  const Mat3 F = testutil::random_rotation(gen) + 0.1 * skew(Vec3(1, 2, 3));

  SUBCASE("identity K leaves F unchanged") {
    const Intrinsics K{1, 1, 0, 0};
    CHECK((essential_from_f(F, K) - F).norm() < 1e-15);
  }

  SUBCASE("construct-and-invert recovers E up to scale") {
    const Intrinsics K{500, 480, 320, 240};
    const Mat3 R = testutil::random_rotation(gen);
    const Vec3 t(0.3, -0.1, 0.9);
    const Mat3 E = skew(t) * R;
    const Mat3 Fk = K.inverse_matrix().transpose() * E * K.inverse_matrix();
    const Mat3 back = essential_from_f(Fk, K);
    const double scale = back.norm() / E.norm();
    CHECK((back / scale - E).norm() < 1e-9 * E.norm());

    Eigen::JacobiSVD<Mat3> svd(back);
    const Vec3 sv = svd.singularValues();
    CHECK(std::abs(sv(0) - sv(1)) / sv(0) < 1e-9);
    CHECK(sv(2) / sv(0) < 1e-9);
  }
}

namespace {

// Projects world points through two known cameras; the geometry oracle for
// the eight-point tests.
std::vector<PixelMatch> synthetic_matches(const Intrinsics& K, const Pose& Ta,
                                          const Pose& Tb, int count) {
  auto gen = testutil::rng(43);
  std::uniform_real_distribution<double> dx(-4.0, 4.0);
  std::uniform_real_distribution<double> dz(6.0, 20.0);
  std::vector<PixelMatch> matches;
  while (static_cast<int>(matches.size()) < count) {
    const Vec3 world(dx(gen), dx(gen), dz(gen));
    const Vec3 ca = Ta.inverse().apply(world);
    const Vec3 cb = Tb.inverse().apply(world);
    if (ca.z() <= 0.1 || cb.z() <= 0.1) continue;
    matches.push_back({K.project(ca), K.project(cb)});
  }
  return matches;
}

}  // namespace

TEST_CASE("eight_point on exact correspondences") {
  const Intrinsics K{400, 400, 64, 48};
  const Pose Ta = Pose::identity();
  const Pose Tb{rodrigues(Vec3(0.02, -0.04, 0.01)), Vec3(0.8, 0.1, 0.3)};
  const auto matches = synthetic_matches(K, Ta, Tb, 20);

  const Mat3 F = eight_point(matches);
  CHECK(mean_epipolar_residual(F, matches) < 1e-8);

  // Rank-2 enforcement.
  Eigen::JacobiSVD<Mat3> svd(F);
  CHECK(svd.singularValues()(2) / svd.singularValues()(0) <= 1e-6);

  // Agrees with the pose-derived fundamental matrix up to scale.
  Mat3 Fgt = fundamental_from_poses(K, Ta, K, Tb);
  Fgt /= Fgt.norm();
  if (Fgt.cwiseProduct(F).sum() < 0) Fgt = -Fgt;
  CHECK((F - Fgt).norm() < 1e-8);
}

TEST_CASE("eight_point inlier mask hook") {
  const Intrinsics K{400, 400, 64, 48};
  const Pose Tb{rodrigues(Vec3(0.02, -0.04, 0.01)), Vec3(0.8, 0.1, 0.3)};
  auto matches = synthetic_matches(K, Pose::identity(), Tb, 20);
  const Mat3 all = eight_point(matches);

  // Corrupt two matches and mask them out: the masked solve matches the
  // clean one.
  std::vector<std::uint8_t> mask(matches.size(), 1);
  auto corrupted = matches;
  corrupted[3].b += Vec2(25.0, -12.0);
  corrupted[11].a += Vec2(-30.0, 8.0);
  mask[3] = 0;
  mask[11] = 0;
  Mat3 masked = eight_point(corrupted, mask);
  if (masked.cwiseProduct(all).sum() < 0) masked = -masked;
  CHECK((masked - all).norm() < 1e-9);

  mask.pop_back();
  CHECK_THROWS_AS(eight_point(corrupted, mask), std::invalid_argument);
}

TEST_CASE("eight_point error paths") {
  const Intrinsics K{400, 400, 64, 48};
  const Pose Tb{Mat3::Identity(), Vec3(0.5, 0, 0)};
  auto matches = synthetic_matches(K, Pose::identity(), Tb, 7);
  CHECK_THROWS_AS(eight_point(matches), std::invalid_argument);

  // Zero parallax: both views see identical pixels.
  std::vector<PixelMatch> identical;
  auto gen = testutil::rng(47);
  std::uniform_real_distribution<double> d(0.0, 100.0);
  for (int i = 0; i < 12; ++i) {
    const Vec2 p(d(gen), d(gen));
    identical.push_back({p, p});
  }
  CHECK_THROWS_AS(eight_point(identical), std::runtime_error);
}
