#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "duet/config.hpp"
#include "duet/metrics.hpp"
#include "duet/trajectory_io.hpp"
#include "test_util.hpp"

using namespace duet;

namespace {

// Brute-force reimplementations, kept independent of the library path.

double brute_ate_none(std::span<const Vec3> est, std::span<const Vec3> gt) {
  double sum = 0.0;
  for (size_t i = 0; i < est.size(); ++i) sum += (est[i] - gt[i]).squaredNorm();
  return std::sqrt(sum / est.size());
}

// Umeyama written out long-hand.
double brute_ate_aligned(std::span<const Vec3> est, std::span<const Vec3> gt,
                         bool with_scale) {
  const size_t n = est.size();
  Vec3 me = Vec3::Zero(), mg = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    me += est[i];
    mg += gt[i];
  }
  me /= n;
  mg /= n;
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  double var = 0.0;
  for (size_t i = 0; i < n; ++i) {
    h += (gt[i] - mg) * (est[i] - me).transpose();
    var += (est[i] - me).squaredNorm();
  }
  h /= n;
  var /= n;
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2, 2) = -1;
  const Eigen::Matrix3d r = svd.matrixU() * d * svd.matrixV().transpose();
  double s = 1.0;
  if (with_scale) {
    s = (svd.singularValues().asDiagonal().toDenseMatrix() * d).trace() / var;
  }
  const Vec3 t = mg - s * (r * me);
  double sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sum += (s * (r * est[i]) + t - gt[i]).squaredNorm();
  }
  return std::sqrt(sum / n);
}

CloudMetrics brute_cloud_metrics(std::span<const Vec3> est, std::span<const Vec3> gt) {
  auto one_way = [](std::span<const Vec3> from, std::span<const Vec3> to) {
    double sum = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
      sum += std::sqrt(best);
    }
    return sum / from.size();
  };
  CloudMetrics m;
  m.accuracy = one_way(est, gt);
  m.completeness = one_way(gt, est);
  m.chamfer = 0.5 * (m.accuracy + m.completeness);
  return m;
}

}  // namespace

TEST_CASE("ate basics") {
  std::vector<Vec3> traj;
  auto gen = testutil::rng(3);
  for (int i = 0; i < 100; ++i) {
    traj.push_back(Vec3(std::sin(i * 0.2) * 5, 0.1 * i, i));
  }

  SUBCASE("identical trajectories give zero") {
    CHECK(ate(traj, traj, Alignment::Se3) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ate(traj, traj, Alignment::Sim3) == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("rigid motion of the estimate vanishes under se3 alignment") {
    const Pose rigid = testutil::random_pose(gen, 10.0);
    std::vector<Vec3> moved;
    for (const auto& p : traj) moved.push_back(rigid.apply(p));
    CHECK(ate(moved, traj, Alignment::Se3) < 1e-9);
    CHECK(ate(moved, traj, Alignment::None) > 1.0);
  }

  SUBCASE("uniform scaling additionally vanishes under sim3") {
    std::vector<Vec3> scaled;
    for (const auto& p : traj) scaled.push_back(1.7 * p);
    CHECK(ate(scaled, traj, Alignment::Sim3) < 1e-9);
    CHECK(ate(scaled, traj, Alignment::Se3) > 0.1);
  }

  SUBCASE("one offset pose among 100, no alignment: hand RMSE 0.1") {
    std::vector<Vec3> est = traj;
    est[42] += Vec3(1, 0, 0);
    CHECK(ate(est, traj, Alignment::None) == doctest::Approx(0.1).epsilon(1e-9));
  }

  SUBCASE("fewer than two poses error") {
    std::vector<Vec3> one = {Vec3::Zero()};
    CHECK_THROWS_AS(ate(one, one, Alignment::Se3), std::invalid_argument);
  }
}

TEST_CASE("ate matches the brute-force oracle") {
  auto gen = testutil::rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vec3> gt, est;
    const int n = 50 + static_cast<int>(gen() % 150);
    for (int i = 0; i < n; ++i) {
      gt.push_back(testutil::random_vec3(gen, 10.0));
      est.push_back(gt.back() + testutil::random_vec3(gen, 0.3));
    }
    CHECK(ate(est, gt, Alignment::None) ==
          doctest::Approx(brute_ate_none(est, gt)).epsilon(1e-10));
    CHECK(ate(est, gt, Alignment::Se3) ==
          doctest::Approx(brute_ate_aligned(est, gt, false)).epsilon(1e-10));
    CHECK(ate(est, gt, Alignment::Sim3) ==
          doctest::Approx(brute_ate_aligned(est, gt, true)).epsilon(1e-10));
  }
}

TEST_CASE("scale drift windows") {
  std::vector<Vec3> gt;
  for (int i = 0; i < 300; ++i) {
    gt.push_back(Vec3(std::cos(i * 0.05) * 20, 0.5 * std::sin(i * 0.11), i * 0.5));
  }

  SUBCASE("constant global scale normalizes to exactly 1") {
    std::vector<Vec3> est;
    for (const auto& p : gt) est.push_back(3.1 * p);
    const auto drift = scale_drift_windows(est, gt, 100, 5);
    for (double s : drift.normalized) CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(drift.mean == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(drift.stddev < 1e-9);
  }

  SUBCASE("a growing estimate scale drifts the series monotonically") {
    // The window fit maps the estimate onto ground truth, so a growing
    // estimate scale pushes the normalized series monotonically below 1.
    std::vector<Vec3> est;
    for (size_t i = 0; i < gt.size(); ++i) {
      est.push_back((1.0 + 0.002 * i) * gt[i]);
    }
    const auto drift = scale_drift_windows(est, gt, 100, 5);
    for (size_t i = 1; i < drift.normalized.size(); ++i) {
      CHECK(drift.normalized[i] < drift.normalized[i - 1]);
    }
    CHECK(drift.stddev > 0.01);
  }

  SUBCASE("short trajectories error") {
    std::vector<Vec3> tiny(gt.begin(), gt.begin() + 50);
    CHECK_THROWS_AS(scale_drift_windows(tiny, tiny, 100, 5),
                    std::invalid_argument);
  }
}

TEST_CASE("cloud metrics") {
  SUBCASE("identical clouds") {
    std::vector<Vec3> c = {{0, 0, 0}, {1, 0, 0}, {0, 2, 0}};
    const auto m = cloud_metrics(c, c);
    CHECK(m.accuracy == doctest::Approx(0.0));
    CHECK(m.completeness == doctest::Approx(0.0));
    CHECK(m.chamfer == doctest::Approx(0.0));
  }

  SUBCASE("hand-evaluated asymmetric pair") {
    std::vector<Vec3> est = {{0, 0, 0}};
    std::vector<Vec3> truth = {{1, 0, 0}, {3, 0, 0}};
    const auto m = cloud_metrics(est, truth);
    CHECK(m.accuracy == doctest::Approx(1.0));
    CHECK(m.completeness == doctest::Approx(2.0));
    CHECK(m.chamfer == doctest::Approx(1.5));
  }

  SUBCASE("subset asymmetry") {
    std::vector<Vec3> truth;
    auto gen = testutil::rng(7);
    for (int i = 0; i < 50; ++i) truth.push_back(testutil::random_vec3(gen, 5.0));
    std::vector<Vec3> est(truth.begin(), truth.begin() + 20);
    const auto m = cloud_metrics(est, truth);
    CHECK(m.accuracy == doctest::Approx(0.0));
    CHECK(m.completeness > 0.0);
  }

  SUBCASE("empty cloud errors") {
    std::vector<Vec3> c = {{0, 0, 0}};
    CHECK_THROWS_AS(cloud_metrics({}, c), std::invalid_argument);
    CHECK_THROWS_AS(cloud_metrics(c, {}), std::invalid_argument);
  }

  SUBCASE("kd-tree equals brute force on random instances") {
    auto gen = testutil::rng(9);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<Vec3> est, truth;
      const int ne = 20 + static_cast<int>(gen() % 180);
      const int nt = 20 + static_cast<int>(gen() % 180);
      for (int i = 0; i < ne; ++i) est.push_back(testutil::random_vec3(gen, 4.0));
      for (int i = 0; i < nt; ++i) truth.push_back(testutil::random_vec3(gen, 4.0));
      const auto fast = cloud_metrics(est, truth);
      const auto brute = brute_cloud_metrics(est, truth);
      CHECK(fast.accuracy == doctest::Approx(brute.accuracy).epsilon(1e-12));
      CHECK(fast.completeness == doctest::Approx(brute.completeness).epsilon(1e-12));
      CHECK(fast.chamfer == doctest::Approx(brute.chamfer).epsilon(1e-12));
    }
  }
}

TEST_CASE("TUM trajectory format") {
  SUBCASE("identity pose formatting") {
    CHECK(format_tum_line({0.0, Pose::identity()}) == "0.000000000 0 0 0 0 0 0 1\n");
  }

  SUBCASE("random poses round trip under 1e-8") {
    auto gen = testutil::rng(11);
    std::vector<StampedPose> traj;
    for (int i = 0; i < 1000; ++i) {
      traj.push_back({i * 0.1, testutil::random_pose(gen, 5.0, 3.0)});
    }
    const auto tmp = std::filesystem::temp_directory_path() / "duet_traj.tum";
    write_tum(tmp.string(), traj);
    const auto back = read_tum(tmp.string());
    std::remove(tmp.string().c_str());

    REQUIRE(back.size() == traj.size());
    double worst = 0.0;
    for (size_t i = 0; i < traj.size(); ++i) {
      worst = std::max(worst, (back[i].pose.t - traj[i].pose.t).norm());
      worst = std::max(worst, (back[i].pose.R - traj[i].pose.R).norm());
      worst = std::max(worst, std::abs(back[i].timestamp - traj[i].timestamp));
    }
    CHECK(worst < 1e-8);
  }

  SUBCASE("truncated line reports its number") {
    const auto tmp = std::filesystem::temp_directory_path() / "duet_bad.tum";
    {
      std::ofstream os(tmp);
      os << "0.0 0 0 0 0 0 0 1\n";
      os << "1.0 0 0 0\n";  // truncated
    }
    try {
      read_tum(tmp.string());
      CHECK(false);
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    std::remove(tmp.string().c_str());
  }
}

TEST_CASE("config round trip and validation") {
  RunConfig cfg;
  cfg.world.length = 512.0;
  cfg.pipeline.tau_flow = 13.5;
  cfg.bank.n_pair = 7;
  cfg.seed = 12345;
  cfg.enable_scale_rectification = false;
  cfg.distortion.scale_multipliers = {1.0, 2.0, 0.5};

  const std::string text = config_to_text(cfg);
  const RunConfig back = parse_config_text(text);
  CHECK(back.world.length == doctest::Approx(512.0));
  CHECK(back.pipeline.tau_flow == doctest::Approx(13.5));
  CHECK(back.bank.n_pair == 7);
  CHECK(back.seed == 12345);
  CHECK(!back.enable_scale_rectification);
  REQUIRE(back.distortion.scale_multipliers.size() == 3);
  CHECK(back.distortion.scale_multipliers[1] == doctest::Approx(2.0));
  // The run seed drives the stochastic modules.
  CHECK(back.world.seed == 12345);
  CHECK(back.anchors.seed == 12345);

  SUBCASE("defaults carry the reference values") {
    const RunConfig d = parse_config_text("");
    CHECK(d.pipeline.tau_flow == doctest::Approx(25.0));
    CHECK(d.pipeline.n_max == 15);
    CHECK(d.pipeline.n_overlap == 3);
    CHECK(d.odometry_window == 3);
    CHECK(d.odometry_noise.rot_sigma == doctest::Approx(0.05));
    CHECK(d.odometry_noise.trans_sigma == doctest::Approx(0.1));
    CHECK(d.prior_noise.rot_sigma == doctest::Approx(0.01));
    CHECK(d.bank.n_feature == 10);
    CHECK(d.bank.n_pair == 10);
    CHECK(d.bank.n_group == 5);
    CHECK(d.anchors.n_grid == 24);
    CHECK(d.anchors.eta_proj == doctest::Approx(0.02));
    CHECK(d.anchors.suppression_radius == doctest::Approx(0.4));
    CHECK(d.tps_lambda == doctest::Approx(1e-4));
  }

  SUBCASE("unknown keys are rejected with a line number") {
    try {
      parse_config_text("[world]\nbogus = 1\n");
      CHECK(false);
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
      CHECK(std::string(e.what()).find("bogus") != std::string::npos);
    }
  }

  SUBCASE("ablation names") {
    RunConfig a;
    apply_ablation(a, "scale-rectification");
    CHECK(!a.enable_scale_rectification);
    apply_ablation(a, "nonlinear-align");
    CHECK(!a.enable_nonlinear_align);
    apply_ablation(a, "pose-correction");
    CHECK(!a.correction.rotation_enabled);
    CHECK(!a.correction.translation_enabled);
    CHECK_THROWS_AS(apply_ablation(a, "nonsense"), std::runtime_error);
  }
}
