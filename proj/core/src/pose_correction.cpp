#include "duet/pose_correction.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace duet {

ScalingError scaling_from_intrinsics(const Intrinsics& k_est,
                                     const Intrinsics& k_global) {
  if (k_global.fx <= 0.0 || k_global.fy <= 0.0) {
    throw std::invalid_argument("scaling_from_intrinsics: invalid reference intrinsics");
  }
  const double sx = k_est.fx / k_global.fx;
  const double sy = k_est.fy / k_global.fy;
  if (sx <= 0.0 || sy <= 0.0) {
    throw std::invalid_argument("scaling_from_intrinsics: non-positive focal ratio");
  }
  return ScalingError{sx, sy};
}

Vec3 rotation_error_vector(const Mat3& r, const Vec3& t_est, const Mat3& delta) {
  const double n2 = t_est.squaredNorm();
  return skew(t_est) * ((r * delta * r.transpose() - delta) * t_est) / n2;
}

Vec3 correct_translation(const Vec3& t_est, const ScalingError& s,
                         const Mat3& r_est, const CorrectionOptions& opt) {
  if (!opt.translation_enabled) return t_est;
  const double angle = rotation_log(r_est).norm();
  if (angle < opt.rotation_switch) {
    return s.scaling() * t_est;
  }
  Mat3 s_inv = Mat3::Identity();
  s_inv(0, 0) = 1.0 / s.sx;
  s_inv(1, 1) = 1.0 / s.sy;
  const Mat3 m = s_inv * skew(t_est) * r_est * s_inv * r_est.transpose();
  // M is only approximately skew; keep its antisymmetric part.
  const Vec3 raw = unskew((m - m.transpose()) * 0.5);
  return s.sx * s.sy * raw;
}

RotationCorrection correct_rotation(const Mat3& r_est, const Vec3& t_est,
                                    const ScalingError& s,
                                    const CorrectionOptions& opt) {
  if (!opt.rotation_enabled || t_est.norm() <= opt.min_translation) {
    return RotationCorrection{r_est, Vec3::Zero(), true};
  }
  const Vec3 theta = rotation_error_vector(r_est, t_est, s.deviation());
  return RotationCorrection{rodrigues(theta).transpose() * r_est, theta, false};
}

CorrectedStep correct_step(const Pose& estimated, const ScalingError& damped,
                           const CorrectionOptions& opt) {
  CorrectedStep out;
  out.estimated = estimated;
  const auto rot = correct_rotation(estimated.R, estimated.t, damped, opt);
  out.corrected.R = rot.rotation;
  out.theta = rot.theta;
  out.rotation_skipped = rot.skipped;
  out.general_branch = opt.translation_enabled &&
                       rotation_log(estimated.R).norm() >= opt.rotation_switch;
  out.corrected.t = correct_translation(estimated.t, damped, estimated.R, opt);
  return out;
}

std::vector<Pose> rectify_primary_chain(const Pose& start,
                                        std::span<const OdometryStep> steps,
                                        const Intrinsics& k_global,
                                        double lambda,
                                        const CorrectionOptions& opt,
                                        std::vector<CorrectedStep>* log) {
  std::vector<Pose> world;
  world.reserve(steps.size() + 1);
  world.push_back(start);
  for (const auto& step : steps) {
    const ScalingError damped =
        scaling_from_intrinsics(step.k_est, k_global).damped(lambda);
    CorrectedStep corr = correct_step(step.motion, damped, opt);
    corr.lambda = lambda;
    world.push_back(world.back() * corr.corrected);
    if (log) log->push_back(corr);
  }
  return world;
}

namespace {

Pose interpolate_trajectory(std::span<const StampedPose> traj, double time) {
  if (traj.empty()) throw std::out_of_range("empty primary trajectory");
  const double eps = 1e-12;
  if (time < traj.front().timestamp - eps || time > traj.back().timestamp + eps) {
    throw std::out_of_range("assistant timestamp outside primary trajectory span");
  }
  auto hi = std::lower_bound(
      traj.begin(), traj.end(), time,
      [](const StampedPose& p, double t) { return p.timestamp < t; });
  if (hi == traj.end()) return traj.back().pose;
  if (hi == traj.begin() || std::abs(hi->timestamp - time) <= eps) return hi->pose;
  const auto lo = hi - 1;
  const double span = hi->timestamp - lo->timestamp;
  const double alpha = span > 0.0 ? (time - lo->timestamp) / span : 0.0;
  return se3_interpolate(lo->pose, hi->pose, std::clamp(alpha, 0.0, 1.0));
}

}  // namespace

std::vector<StampedPose> rectify_assistant_chain(
    std::span<const StampedPose> primary_world,
    std::span<const AssistantObservation> observations, double lambda,
    const CorrectionOptions& opt) {
  std::vector<StampedPose> out;
  out.reserve(observations.size());
  for (const auto& obs : observations) {
    const Pose reference = interpolate_trajectory(primary_world, obs.reference_time);
    const ScalingError joint{
        0.5 * (obs.primary_scaling.sx + obs.assistant_scaling.sx),
        0.5 * (obs.primary_scaling.sy + obs.assistant_scaling.sy)};
    const CorrectedStep corr =
        correct_step(obs.relative_to_reference, joint.damped(lambda), opt);
    out.push_back({obs.timestamp, reference * corr.corrected});
  }
  return out;
}

void write_correction_log(const std::string& path,
                          std::span<const CorrectedStep> steps) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open correction log: " + path);
  os << "step,theta_norm,branch,rotation_skipped,lambda\n";
  char line[128];
  for (size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    std::snprintf(line, sizeof(line), "%zu,%.9g,%s,%d,%.3g\n", i,
                  s.theta.norm(), s.general_branch ? "general" : "simplified",
                  s.rotation_skipped ? 1 : 0, s.lambda);
    os << line;
  }
}

}  // namespace duet
