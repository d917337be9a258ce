#include <benchmark/benchmark.h>

#include <random>

#include "duet/geometry.hpp"
#include "duet/metrics.hpp"
#include "duet/pgo.hpp"
#include "duet/tps.hpp"

using namespace duet;

namespace {

std::mt19937_64 gen(1234);

Vec3 rand_vec(double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  return Vec3(d(gen), d(gen), d(gen));
}

Pose rand_pose() {
  Vec3 axis = rand_vec(1.0);
  if (axis.norm() < 1e-9) axis = Vec3::UnitZ();
  return Pose{rodrigues(axis.normalized() * 0.4), rand_vec(3.0)};
}

}  // namespace

static void BM_Rodrigues(benchmark::State& state) {
  const Vec3 theta(0.1, -0.2, 0.3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(rodrigues(theta));
  }
}
BENCHMARK(BM_Rodrigues);

static void BM_Se3LogExp(benchmark::State& state) {
  const Pose p = rand_pose();
  for (auto _ : state) {
    benchmark::DoNotOptimize(se3_exp(se3_log(p)));
  }
}
BENCHMARK(BM_Se3LogExp);

static void BM_Se3Interpolate(benchmark::State& state) {
  const Pose a = rand_pose();
  const Pose b = rand_pose();
  double alpha = 0.0;
  for (auto _ : state) {
    alpha = alpha < 0.99 ? alpha + 0.01 : 0.01;
    benchmark::DoNotOptimize(se3_interpolate(a, b, alpha));
  }
}
BENCHMARK(BM_Se3Interpolate);

static void BM_EightPoint(benchmark::State& state) {
  const Intrinsics k{400, 400, 64, 48};
  const Pose tb{rodrigues(Vec3(0.02, -0.03, 0.01)), Vec3(0.6, 0.1, 0.2)};
  std::vector<PixelMatch> matches;
  std::uniform_real_distribution<double> dx(-4.0, 4.0);
  std::uniform_real_distribution<double> dz(6.0, 20.0);
  while (matches.size() < static_cast<size_t>(state.range(0))) {
    const Vec3 world(dx(gen), dx(gen), dz(gen));
    const Vec3 cb = tb.inverse().apply(world);
    if (cb.z() < 0.1) continue;
    matches.push_back({k.project(world), k.project(cb)});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(eight_point(matches));
  }
}
BENCHMARK(BM_EightPoint)->Arg(8)->Arg(20)->Arg(100);

static void BM_TpsFit(benchmark::State& state) {
  std::vector<Vec3> src, dst;
  for (int i = 0; i < state.range(0); ++i) {
    const Vec3 p = rand_vec(5.0);
    src.push_back(p);
    dst.push_back(p + 0.05 * Vec3(std::sin(p.x()), std::cos(p.y()), std::sin(p.z())));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_tps(src, dst, 1e-4));
  }
}
BENCHMARK(BM_TpsFit)->Arg(50)->Arg(200)->Arg(800);

static void BM_TpsApply(benchmark::State& state) {
  std::vector<Vec3> src, dst;
  for (int i = 0; i < 200; ++i) {
    const Vec3 p = rand_vec(5.0);
    src.push_back(p);
    dst.push_back(p + 0.05 * rand_vec(1.0));
  }
  const TpsModel model = fit_tps(src, dst, 1e-4);
  const Vec3 q = rand_vec(5.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.apply(q));
  }
}
BENCHMARK(BM_TpsApply);

static void BM_KdTreeQuery(benchmark::State& state) {
  std::vector<Vec3> cloud;
  for (int i = 0; i < state.range(0); ++i) cloud.push_back(rand_vec(10.0));
  const KdTree3 tree(cloud);
  for (auto _ : state) {
    benchmark::DoNotOptimize(tree.nearest_squared(rand_vec(10.0)));
  }
}
BENCHMARK(BM_KdTreeQuery)->Arg(1000)->Arg(100000);

static void BM_PgoSolve(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  GraphValues truth;
  for (int i = 0; i < n; ++i) {
    const double angle = 2.0 * M_PI * i / n;
    truth.poses.push_back(Pose{rodrigues(Vec3(0, angle, 0)),
                               Vec3(30 * std::cos(angle), 0, 30 * std::sin(angle))});
  }
  Vec6 bias;
  bias << 0, 1e-4, 0, 2e-3, 0, 1e-3;
  NoiseModel noise;
  FactorGraph graph;
  GraphValues init;
  init.poses.push_back(truth.poses[0]);
  for (int i = 1; i < n; ++i) {
    const Pose meas = (truth.poses[i - 1].inverse() * truth.poses[i]) * se3_exp(bias);
    graph.add_odometry_factor(i, i - 1, meas, noise);
    init.poses.push_back(init.poses.back() * meas);
  }
  graph.add_loop_factor(n - 1, 0, truth.poses[0].inverse() * truth.poses[n - 1], noise);
  for (auto _ : state) {
    benchmark::DoNotOptimize(optimize(graph, init));
  }
}
BENCHMARK(BM_PgoSolve)->Arg(100)->Arg(400)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
