#pragma once

#include <span>
#include <vector>

#include "duet/geometry.hpp"

namespace duet {

enum class Alignment { None, Se3, Sim3 };

/// Closed-form similarity fit mapping est -> gt: x' = scale * R x + t.
struct AlignmentResult {
  double scale = 1.0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * (R * x) + t; }
};

AlignmentResult umeyama_alignment(std::span<const Vec3> est,
                                  std::span<const Vec3> gt, bool with_scale);

/// RMSE of position error after the chosen trajectory alignment.
/// Throws std::invalid_argument below 2 correspondences.
double ate(std::span<const Vec3> estimated, std::span<const Vec3> ground_truth,
           Alignment alignment);

struct ScaleDriftResult {
  std::vector<double> normalized;  // per-window scale / first-window scale
  double mean = 0.0;
  double mean_abs_error = 0.0;  // mean |normalized - 1|
  double stddev = 0.0;
};

/// Per-window least-squares (similarity) scale against ground truth,
/// normalized by the first window. Throws when the trajectory is shorter
/// than one window.
ScaleDriftResult scale_drift_windows(std::span<const Vec3> estimated,
                                     std::span<const Vec3> ground_truth,
                                     int window = 100, int stride = 5);

struct CloudMetrics {
  double accuracy = 0.0;      // mean NN distance estimate -> truth
  double completeness = 0.0;  // truth -> estimate
  double chamfer = 0.0;       // mean of the two
};

/// Exact nearest neighbours (kd-tree, identical arithmetic to brute force).
/// Throws std::invalid_argument on empty clouds.
CloudMetrics cloud_metrics(std::span<const Vec3> estimate,
                           std::span<const Vec3> truth);

/// Exact 3D nearest-neighbour index.
class KdTree3 {
 public:
  explicit KdTree3(std::span<const Vec3> points);
  double nearest_squared(const Vec3& query) const;
  size_t size() const { return points_.size(); }

 private:
  struct Node {
    int point = -1;
    int left = -1;
    int right = -1;
    int axis = 0;
  };
  int build(int begin, int end, int depth);
  void search(int node, const Vec3& query, double& best) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace duet
