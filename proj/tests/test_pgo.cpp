#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "duet/pgo.hpp"
#include "test_util.hpp"

using namespace duet;

TEST_CASE("residual_between") {
  auto gen = testutil::rng(3);
  const Pose b = testutil::random_pose(gen, 2.0);
  const Pose meas = testutil::random_pose(gen, 1.0);

  SUBCASE("consistent measurement gives a zero residual") {
    const Pose a = b * meas;
    CHECK(residual_between(meas, a, b).norm() < 1e-12);
  }

  SUBCASE("identity measurement with equal poses") {
    CHECK(residual_between(Pose::identity(), b, b).norm() < 1e-12);
  }

  SUBCASE("one degree offset about z") {
    const Vec3 offset(0, 0, 1.0 * M_PI / 180.0);
    Vec6 delta = Vec6::Zero();
    delta.head<3>() = offset;
    const Pose a = b * meas * se3_exp(delta);
    const Vec6 r = residual_between(meas, a, b);
    CHECK(r.head<3>().norm() == doctest::Approx(0.0174533).epsilon(1e-4));
  }
}

TEST_CASE("odometry factor counts") {
  NoiseModel noise;
  auto chain = [](int n) {
    std::vector<Pose> t;
    for (int i = 0; i < n; ++i) t.push_back(Pose{Mat3::Identity(), Vec3(0, 0, i)});
    return t;
  };

  FactorGraph g2;
  g2.add_primary_odometry(chain(2), 3, noise);
  CHECK(g2.factors().size() == 1);

  FactorGraph g5;
  g5.add_primary_odometry(chain(5), 3, noise);
  CHECK(g5.factors().size() == 9);

  FactorGraph g_chain;
  g_chain.add_primary_odometry(chain(7), 1, noise);
  CHECK(g_chain.factors().size() == 6);
}

TEST_CASE("assistant factor") {
  auto gen = testutil::rng(5);
  NoiseModel noise;
  GraphValues values;
  for (int i = 0; i < 3; ++i) values.poses.push_back(testutil::random_pose(gen, 2.0));
  values.extrinsic = Pose{rodrigues(Vec3(0.01, 0.2, 0)), Vec3(0.5, 0, 0)};

  const Pose ta_i = values.poses[2] * values.extrinsic;
  const Pose ta_j = values.poses[1] * values.extrinsic;
  const Pose meas = ta_j.inverse() * ta_i;

  FactorGraph g;
  g.add_assistant_factor(2, 1, meas, noise);
  const auto lin = linearize_factor(g.factors()[0], values);
  CHECK(lin.residual.norm() < 1e-12);

  CHECK_THROWS_AS(g.add_assistant_factor(1, 1, meas, noise), std::invalid_argument);

  SUBCASE("perturbed extrinsic produces a residual that optimization removes") {
    GraphValues init = values;
    init.extrinsic.t += Vec3(0.01, 0, 0);
    FactorGraph g2;
    g2.add_odometry_factor(1, 0, values.poses[0].inverse() * values.poses[1], noise);
    g2.add_odometry_factor(2, 1, values.poses[1].inverse() * values.poses[2], noise);
    g2.add_assistant_factor(2, 1, meas, noise);
    g2.add_assistant_factor(1, 0, (values.poses[0] * values.extrinsic).inverse() *
                                     (values.poses[1] * values.extrinsic),
                            noise);
    CHECK(graph_cost(g2, init) > 1e-6);
    const auto result = optimize(g2, init);
    CHECK(result.final_cost < 1e-16);
  }
}

TEST_CASE("extrinsic prior") {
  NoiseModel prior_noise{0.01, 0.01};
  const Pose prior{rodrigues(Vec3(0, 0.1, 0)), Vec3(0.5, 0, 0)};

  SUBCASE("zero residual at the prior") {
    GraphValues v;
    v.poses.push_back(Pose::identity());
    v.extrinsic = prior;
    FactorGraph g;
    g.add_extrinsic_prior(prior, prior_noise);
    CHECK(linearize_factor(g.factors()[0], v).residual.norm() < 1e-12);
  }

  SUBCASE("prior alone pulls the extrinsic to it") {
    GraphValues init;
    init.poses.push_back(Pose::identity());
    init.poses.push_back(Pose{Mat3::Identity(), Vec3(0, 0, 1)});
    init.extrinsic = Pose{rodrigues(Vec3(0, 0.2, 0)), Vec3(0.4, 0.1, 0)};
    FactorGraph g;
    g.add_extrinsic_prior(prior, prior_noise);
    const auto result = optimize(g, init);
    CHECK((result.values.extrinsic.t - prior.t).norm() < 1e-7);
    CHECK((result.values.extrinsic.R - prior.R).norm() < 1e-7);
  }

  SUBCASE("straight-line motion leaves the baseline unobservable without a prior") {
    // All-identity rotations: assistant factors are independent of the
    // extrinsic translation, so a wrong initialization survives unless the
    // prior bounds it.
    const Pose true_ext{Mat3::Identity(), Vec3(0.5, 0, 0)};
    GraphValues truth;
    for (int i = 0; i < 6; ++i) {
      truth.poses.push_back(Pose{Mat3::Identity(), Vec3(0, 0, 1.0 * i)});
    }
    truth.extrinsic = true_ext;

    NoiseModel noise;
    FactorGraph g;
    g.add_primary_odometry(truth.poses, 3, noise);
    for (int i = 1; i < 6; ++i) {
      const Pose meas = (truth.poses[i - 1] * true_ext).inverse() *
                        (truth.poses[i] * true_ext);
      g.add_assistant_factor(i, i - 1, meas, noise);
    }

    GraphValues init = truth;
    init.extrinsic.t += Vec3(0, 0, 0.3);  // offset along the motion direction

    const auto without_prior = optimize(g, init);
    CHECK((without_prior.values.extrinsic.t - init.extrinsic.t).norm() < 1e-9);

    FactorGraph g_prior = g;
    g_prior.add_extrinsic_prior(true_ext, NoiseModel{0.01, 0.01});
    const auto with_prior = optimize(g_prior, init);
    CHECK((with_prior.values.extrinsic.t - true_ext.t).norm() < 1e-6);
  }
}

TEST_CASE("analytic jacobians match finite differences") {
  auto gen = testutil::rng(7);
  const double h = 1e-6;

  auto fd_check = [&](const Factor& f, const GraphValues& values) {
    const auto lin = linearize_factor(f, values);

    auto residual_at = [&](const GraphValues& v) {
      return linearize_factor(f, v).residual;
    };

    auto check_block = [&](const Mat6& analytic, auto perturb) {
      Mat6 fd;
      for (int k = 0; k < 6; ++k) {
        Vec6 d = Vec6::Zero();
        d(k) = h;
        GraphValues plus = values;
        perturb(plus, se3_exp(d));
        GraphValues minus = values;
        perturb(minus, se3_exp(-d));
        fd.col(k) = (residual_at(plus) - residual_at(minus)) / (2.0 * h);
      }
      const double rel = (analytic - fd).norm() / std::max(1.0, fd.norm());
      CHECK(rel < 1e-4);
    };

    if (lin.uses_a) {
      check_block(lin.j_a, [&](GraphValues& v, const Pose& d) {
        v.poses[f.a] = v.poses[f.a] * d;
      });
    }
    if (lin.uses_b) {
      check_block(lin.j_b, [&](GraphValues& v, const Pose& d) {
        v.poses[f.b] = v.poses[f.b] * d;
      });
    }
    if (lin.uses_ext) {
      check_block(lin.j_ext, [&](GraphValues& v, const Pose& d) {
        v.extrinsic = v.extrinsic * d;
      });
    }
  };

  for (int trial = 0; trial < 10; ++trial) {
    GraphValues values;
    for (int i = 0; i < 4; ++i) {
      values.poses.push_back(testutil::random_pose(gen, 2.0, 0.8));
    }
    values.extrinsic = testutil::random_pose(gen, 0.6, 0.5);
    NoiseModel noise;

    fd_check({FactorKind::PrimaryOdometry, 2, 1, testutil::random_pose(gen, 1.0, 0.5), noise},
             values);
    fd_check({FactorKind::Loop, 3, 0, testutil::random_pose(gen, 1.0, 0.5), noise},
             values);
    fd_check({FactorKind::Assistant, 1, 3, testutil::random_pose(gen, 1.0, 0.5), noise},
             values);
    fd_check({FactorKind::ExtrinsicPrior, -1, -1, testutil::random_pose(gen, 1.0, 0.5), noise},
             values);
  }
}

TEST_CASE("optimize basics") {
  auto gen = testutil::rng(11);
  NoiseModel noise;

  GraphValues truth;
  for (int i = 0; i < 10; ++i) {
    truth.poses.push_back(Pose{testutil::random_rotation(gen, 0.2),
                               Vec3(0.1 * i, 0, 1.0 * i)});
  }

  FactorGraph g;
  g.add_primary_odometry(truth.poses, 3, noise);

  SUBCASE("zero residuals: no iterations, values bit-identical") {
    const auto result = optimize(g, truth);
    CHECK(result.iterations == 0);
    CHECK(result.initial_gradient_norm < 1e-10);
    for (size_t i = 0; i < truth.poses.size(); ++i) {
      CHECK(result.values.poses[i].R == truth.poses[i].R);
      CHECK(result.values.poses[i].t == truth.poses[i].t);
    }
  }

  SUBCASE("one perturbed pose is recovered to the noise floor") {
    GraphValues init = truth;
    Vec6 d;
    d << 0.02, -0.01, 0.03, 0.05, -0.04, 0.06;
    init.poses[5] = init.poses[5] * se3_exp(d);
    const auto result = optimize(g, init);
    CHECK(result.final_cost < 1e-16);
    CHECK((result.values.poses[5].t - truth.poses[5].t).norm() < 1e-8);
    CHECK((result.values.poses[5].R - truth.poses[5].R).norm() < 1e-8);
    // Gauge: the first pose never moves.
    CHECK(result.values.poses[0].R == truth.poses[0].R);
    CHECK(result.values.poses[0].t == truth.poses[0].t);
  }

  SUBCASE("accepted costs never increase") {
    GraphValues init = truth;
    for (size_t i = 1; i < init.poses.size(); ++i) {
      Vec6 d;
      d << 0.01 * i, 0, -0.01 * i, 0.03 * i, 0.02, 0;
      init.poses[i] = init.poses[i] * se3_exp(d * 0.2);
    }
    const auto result = optimize(g, init);
    for (size_t i = 1; i < result.accepted_costs.size(); ++i) {
      CHECK(result.accepted_costs[i] <= result.accepted_costs[i - 1] + 1e-18);
    }
  }
}

TEST_CASE("loop closure cuts the trajectory error on a drifted circle") {
  // 200 poses around a circle; odometry measurements carry a small constant
  // bias, the single loop factor is exact.
  const int n = 200;
  const double radius = 30.0;
  GraphValues truth;
  for (int i = 0; i < n; ++i) {
    const double angle = 2.0 * M_PI * i / n;
    Pose p;
    p.R = rodrigues(Vec3(0, angle, 0));
    p.t = Vec3(radius * std::cos(angle), 0, radius * std::sin(angle));
    truth.poses.push_back(p);
  }

  // Biased odometry: each true step composed with a fixed small error.
  Vec6 bias;
  bias << 0, 2e-4, 0, 3e-3, 0, 1e-3;
  const Pose bias_pose = se3_exp(bias);

  NoiseModel noise;
  FactorGraph g;
  GraphValues init;
  init.poses.push_back(truth.poses[0]);
  for (int i = 1; i < n; ++i) {
    const Pose meas = (truth.poses[i - 1].inverse() * truth.poses[i]) * bias_pose;
    g.add_odometry_factor(i, i - 1, meas, noise);
    init.poses.push_back(init.poses.back() * meas);
  }
  const Pose loop_meas = truth.poses[0].inverse() * truth.poses[n - 1];
  g.add_loop_factor(n - 1, 0, loop_meas, noise);

  auto rmse = [&](const GraphValues& v) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      sum += (v.poses[i].t - truth.poses[i].t).squaredNorm();
    }
    return std::sqrt(sum / n);
  };

  const double before = rmse(init);
  const auto result = optimize(g, init);
  const double after = rmse(result.values);
  CHECK(before > 0.1);
  CHECK(after <= 0.5 * before);
  CHECK(result.final_cost < result.initial_cost);

  SUBCASE("a loop consistent with the current estimate is a no-op") {
    FactorGraph g2;
    for (int i = 1; i < n; ++i) {
      g2.add_odometry_factor(i, i - 1, truth.poses[i - 1].inverse() * truth.poses[i],
                             noise);
    }
    g2.add_loop_factor(n - 1, 0, loop_meas, noise);
    const auto r2 = optimize(g2, truth);
    CHECK(r2.final_cost < 1e-12);
    for (int i = 0; i < n; ++i) {
      CHECK((r2.values.poses[i].t - truth.poses[i].t).norm() < 1e-9);
    }
  }
}

TEST_CASE("stationary point at ground truth") {
  auto gen = testutil::rng(13);
  NoiseModel noise;
  GraphValues truth;
  for (int i = 0; i < 8; ++i) truth.poses.push_back(testutil::random_pose(gen, 3.0));
  truth.extrinsic = Pose{rodrigues(Vec3(0, 0.1, 0.02)), Vec3(0.5, 0.02, 0)};

  FactorGraph g;
  g.add_primary_odometry(truth.poses, 3, noise);
  for (int i = 1; i < 8; ++i) {
    const Pose meas = (truth.poses[i - 1] * truth.extrinsic).inverse() *
                      (truth.poses[i] * truth.extrinsic);
    g.add_assistant_factor(i, i - 1, meas, noise);
  }
  g.add_extrinsic_prior(truth.extrinsic, NoiseModel{0.01, 0.01});

  const auto result = optimize(g, truth);
  CHECK(result.initial_gradient_norm < 1e-10);
  CHECK(result.iterations == 0);
}

TEST_CASE("graph file round trip") {
  auto gen = testutil::rng(17);
  NoiseModel noise;
  FactorGraph g;
  g.add_odometry_factor(1, 0, testutil::random_pose(gen), noise);
  g.add_assistant_factor(2, 1, testutil::random_pose(gen), NoiseModel{0.03, 0.2});
  g.add_extrinsic_prior(testutil::random_pose(gen), NoiseModel{0.01, 0.01});
  g.add_loop_factor(5, 0, testutil::random_pose(gen), noise);

  const auto tmp = std::filesystem::temp_directory_path() / "duet_graph.txt";
  g.write(tmp.string());
  const FactorGraph r = FactorGraph::read(tmp.string());
  std::remove(tmp.string().c_str());

  REQUIRE(r.factors().size() == g.factors().size());
  for (size_t i = 0; i < g.factors().size(); ++i) {
    const auto& a = g.factors()[i];
    const auto& b = r.factors()[i];
    CHECK(a.kind == b.kind);
    CHECK(a.a == b.a);
    CHECK(a.b == b.b);
    CHECK((a.measurement.R - b.measurement.R).norm() < 1e-12);
    CHECK((a.measurement.t - b.measurement.t).norm() < 1e-12);
    CHECK(a.noise.rot_sigma == doctest::Approx(b.noise.rot_sigma));
  }
}
