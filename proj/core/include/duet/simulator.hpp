#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "duet/geometry.hpp"
#include "duet/grid.hpp"
#include "duet/submap.hpp"

namespace duet::sim {

enum class TrajectoryKind { Line, Arc, Loop, RandomWalk };

struct WorldConfig {
  TrajectoryKind trajectory = TrajectoryKind::Arc;
  double length = 300.0;          // scene units of travelled path
  int frame_count = 300;
  double frame_dt = 0.1;          // seconds between frames
  double rig_spacing = 0.5;       // d, the primary-assistant baseline norm
  Pose rig_extrinsic;             // T_ext; translation renormalized to rig_spacing
  Intrinsics intrinsics{20.0, 20.0, 24.0, 8.0};  // K_gt
  int image_width = 48;
  int image_height = 16;
  int landmark_count = 1500;
  double corridor_half_width = 10.0;  // lateral extent of the landmark band / walls
  double wall_height = 6.0;
  double camera_height = 1.5;
  double max_depth = 120.0;
  double arc_turn = M_PI / 2.0;   // total heading change of the Arc kind
  // Gentle out-of-plane motion; purely planar trajectories make the focal
  // scaling unobservable from essential-matrix spectra (turntable
  // degeneracy), so the defaults are non-zero. Periods snap to an integer
  // number of cycles so Loop worlds still close.
  double height_amplitude = 0.4;
  double height_period = 37.0;
  double roll_amplitude = 0.035;  // radians
  double roll_period = 23.0;
  double assistant_time_offset = 0.0;  // shifts the assistant stream (async mode)
  std::uint64_t seed = 1;
};

/// Controllable error injection. Scale multipliers and intrinsic errors are
/// applied per sub-map through the inverse of the correction models, so the
/// forward correction is recoverable at first order; pose noise adds
/// unmodeled perturbations on top.
struct DistortionConfig {
  double scale_sigma = 0.0;                // log-normal sigma of per-sub-map multipliers
  std::vector<double> scale_multipliers;   // explicit per-sub-map override
  double intrinsic_sx = 1.0;
  double intrinsic_sy = 1.0;
  double intrinsic_jitter = 0.0;           // log-sigma of per-sub-map focal fluctuation
  double warp_quadratic = 0.0;             // depth warp d' = d (1 + a rho^2 + b rho^4)
  double warp_quartic = 0.0;
  double pose_noise_rot = 0.0;             // radians per frame
  double pose_noise_trans = 0.0;           // scene units per frame
  double timestamp_offset = 0.0;           // seconds, async assistant shift
};

struct LandmarkProjection {
  int landmark_id = 0;
  Vec2 pixel;
};

struct FrameObservation {
  int frame_id = 0;
  CameraId camera = CameraId::Primary;
  double timestamp = 0.0;
  Pose true_pose;
  Grid depth;       // exact surface depths, 0 where nothing is hit
  Grid confidence;  // [0, 1], 0 where depth is invalid
  std::vector<LandmarkProjection> projections;
};

struct World {
  WorldConfig config;
  std::vector<FrameObservation> primary;
  std::vector<FrameObservation> assistant;
  std::vector<Vec3> landmarks;

  /// Continuous ground-truth pose of either camera.
  Pose pose_at(double time, CameraId camera) const;

  void save(const std::string& path) const;
  static World load(const std::string& path);
};

/// Deterministic world generation. Throws std::invalid_argument on
/// unsatisfiable configs (zero landmarks, fewer than two frames, ...).
World generate_world(const WorldConfig& cfg);

/// Mean landmark pixel motion between consecutive primary frames;
/// element 0 is 0. Frames with no shared landmarks contribute 0.
std::vector<double> disparity_stream(const World& world);

struct SubmapRequest {
  int index = 0;                    // seeds the per-sub-map draws
  std::vector<int> primary_frames;  // bridge first, then new keyframes
  std::vector<int> assistant_frames;
};

struct SubmapDistortionDraw {
  double scale_multiplier = 1.0;
  double sx = 1.0;
  double sy = 1.0;
};

SubmapDistortionDraw draw_submap_distortion(const WorldConfig& world_cfg,
                                            const DistortionConfig& distortion,
                                            int submap_index);

/// Emits the backbone output bundle for one frame window: local poses in
/// the first listed frame's coordinates, scaled by the sub-map multiplier
/// and corrupted by the inverse pose-correction model, depth grids scaled
/// and warped, K_est = S K_gt.
Submap synthesize_submap_output(const World& world, const SubmapRequest& request,
                                const DistortionConfig& distortion);

/// Exact pixel correspondences of landmarks co-visible in two primary
/// frames. Throws std::invalid_argument for a self pair and
/// std::runtime_error when fewer than min_count landmarks are shared.
std::vector<PixelMatch> synthesize_matches(const World& world, int frame_a,
                                           int frame_b, int min_count = 2);

/// Earliest historical primary frame within `radius` of the current frame's
/// true position whose index gap exceeds min_gap; nullopt otherwise.
std::optional<int> loop_oracle(const World& world, int current_frame,
                               double radius, int min_gap);

}  // namespace duet::sim
