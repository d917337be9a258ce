#pragma once

#include <span>
#include <vector>

#include "duet/geometry.hpp"
#include "duet/submap.hpp"

namespace duet {

/// 3D thin-plate spline with kernel U(r) = r:
/// apply(x) = A x + t + sum_i w_i ||x - p_i||.
/// Side conditions sum w_i = 0 and sum w_i p_i^T = 0 hold for every fitted
/// model.
struct TpsModel {
  Mat3 affine = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  std::vector<Vec3> control_points;
  std::vector<Vec3> weights;
  double lambda = 0.0;
  bool affine_fallback = false;  // degenerate controls, warp dropped
  bool rigid_only = false;       // fewer than 4 controls

  Vec3 apply(const Vec3& x) const;
  bool is_identity(double tol = 1e-12) const;
};

/// Fits sources -> targets with stiffness lambda on the warp block.
/// Fewer than 4 points: best rigid transform. Coplanar/collinear controls:
/// least-squares affine, flagged. The linear system is solved in a
/// normalized frame for conditioning; the returned model lives in the
/// original coordinates.
TpsModel fit_tps(std::span<const Vec3> sources, std::span<const Vec3> targets,
                 double lambda);

struct PointCloud {
  std::vector<Vec3> points;
  std::vector<double> confidence;

  size_t size() const { return points.size(); }
};

/// Back-projects every confidence-gated depth pixel of the listed primary
/// frames into the sub-map's local coordinates (all primary frames when the
/// list is empty).
PointCloud backproject_submap(const Submap& s, double tau_conf,
                              std::span<const int> frame_ids = {});

/// Applies the local deformation then the rigid sub-map pose:
/// out = T_wk * model(x).
PointCloud deform_submap(const Submap& s, const TpsModel& model,
                         const Pose& world_from_local, double tau_conf,
                         std::span<const int> frame_ids = {});

void write_cloud(const std::string& path, const PointCloud& cloud);
PointCloud read_cloud(const std::string& path);

}  // namespace duet
