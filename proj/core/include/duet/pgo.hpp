#pragma once

#include <span>
#include <string>
#include <vector>

#include "duet/geometry.hpp"

namespace duet {

enum class FactorKind { PrimaryOdometry, Assistant, ExtrinsicPrior, Loop };

struct NoiseModel {
  double rot_sigma = 0.05;
  double trans_sigma = 0.1;

  Vec6 sigmas() const {
    Vec6 s;
    s << rot_sigma, rot_sigma, rot_sigma, trans_sigma, trans_sigma, trans_sigma;
    return s;
  }
};

/// Relative-pose factor. `a` and `b` index primary pose variables; the
/// measurement models b^-1 a (the pose of a expressed in b's frame).
/// Assistant factors couple a, b and the extrinsic jointly; the prior is
/// unary on the extrinsic.
struct Factor {
  FactorKind kind = FactorKind::PrimaryOdometry;
  int a = -1;
  int b = -1;
  Pose measurement;
  NoiseModel noise;
};

/// log(meas^-1 b^-1 a); zero iff b^-1 a == meas.
Vec6 residual_between(const Pose& meas, const Pose& a, const Pose& b);

struct GraphValues {
  std::vector<Pose> poses;  // primary world poses
  Pose extrinsic;           // T_ext
};

/// State vector {T_w,1..N, T_ext} over primary odometry, assistant,
/// extrinsic-prior and loop factors. Assistant poses never appear as
/// variables; they are parameterized as T_w,i * T_ext inside the factors.
class FactorGraph {
 public:
  /// Dense odometry: for each i, factors (i-k, i), k = 1..min(window, i),
  /// measured from the given world trajectory.
  void add_primary_odometry(std::span<const Pose> trajectory, int window,
                            const NoiseModel& noise);

  /// One odometry factor with an explicit measurement.
  void add_odometry_factor(int i, int j, const Pose& meas, const NoiseModel& noise);

  /// Coupled constraint on (T_w,i, T_w,j, T_ext). Throws on i == j.
  void add_assistant_factor(int i, int j, const Pose& meas, const NoiseModel& noise);

  void add_extrinsic_prior(const Pose& prior, const NoiseModel& noise);

  void add_loop_factor(int current, int historical, const Pose& t_loop,
                       const NoiseModel& noise);

  std::span<const Factor> factors() const { return factors_; }
  bool has_extrinsic() const { return has_extrinsic_; }
  int max_pose_index() const { return max_pose_index_; }

  /// One factor per line: kind, ids, measurement as translation +
  /// quaternion, per-axis sigmas.
  void write(const std::string& path) const;
  static FactorGraph read(const std::string& path);

 private:
  void note_pose(int i);
  std::vector<Factor> factors_;
  bool has_extrinsic_ = false;
  int max_pose_index_ = -1;
};

/// Residual and Jacobian blocks of one factor at the given values, with
/// right-multiplicative tangent parameterization.
struct FactorLinearization {
  Vec6 residual = Vec6::Zero();
  Mat6 j_a = Mat6::Zero();
  Mat6 j_b = Mat6::Zero();
  Mat6 j_ext = Mat6::Zero();
  bool uses_a = false;
  bool uses_b = false;
  bool uses_ext = false;
};

FactorLinearization linearize_factor(const Factor& f, const GraphValues& values);

struct OptimizeOptions {
  int max_iterations = 100;
  double relative_cost_tol = 1e-9;
  double gradient_tol = 1e-12;
  double lambda_init = 1e-4;
  double lambda_min = 1e-9;
  double lambda_max = 1e6;
  double loop_huber = 1.0;  // whitened-norm threshold, loop factors only
};

struct OptimizeResult {
  GraphValues values;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double initial_gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> accepted_costs;
};

/// Levenberg-Marquardt over the whitened residuals; the first pose is the
/// gauge and is returned bit-identical. Throws std::runtime_error when the
/// normal equations stay singular at maximum damping.
OptimizeResult optimize(const FactorGraph& graph, const GraphValues& initial,
                        const OptimizeOptions& opts = {});

double graph_cost(const FactorGraph& graph, const GraphValues& values,
                  double loop_huber = 1.0);

}  // namespace duet
