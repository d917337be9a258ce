#pragma once

#include <string>

#include "duet/anchors.hpp"
#include "duet/intrinsic_search.hpp"
#include "duet/metrics.hpp"
#include "duet/pgo.hpp"
#include "duet/pose_correction.hpp"
#include "duet/simulator.hpp"
#include "duet/submap.hpp"

namespace duet {

/// Every tunable of the system, parseable from a flat sectioned key-value
/// file. Defaults reproduce the reference configuration.
struct RunConfig {
  sim::WorldConfig world;
  sim::DistortionConfig distortion;
  PipelineConfig pipeline;

  BankConfig bank;
  int bank_interval = 5;  // sub-maps between test-group attempts

  int odometry_window = 3;  // K
  NoiseModel odometry_noise{0.05, 0.1};
  NoiseModel loop_noise{0.05, 0.1};
  NoiseModel prior_noise{0.01, 0.01};
  double loop_huber = 1.0;
  double lm_lambda_init = 1e-4;
  int lm_max_iterations = 100;
  double lm_cost_tol = 1e-9;

  bool loop_enabled = true;
  double loop_radius = 4.0;
  int loop_min_gap = 100;

  CorrectionOptions correction;

  AnchorConfig anchors;
  double tps_lambda = 1e-4;

  Alignment ate_alignment = Alignment::Sim3;
  int scale_window = 100;
  int scale_stride = 5;
  int cloud_frame_stride = 1;  // every n-th exported keyframe enters the map

  std::uint64_t seed = 1;
  std::string output_dir = "out";

  // Ablation toggles (all on for the full system).
  bool enable_optimization = true;
  bool enable_pose_correction = true;
  bool enable_rotation_correction = true;
  bool enable_translation_correction = true;
  bool enable_scale_rectification = true;
  bool enable_local_suppression = true;
  bool enable_adaptive_fusion = true;
  bool enable_nonlinear_align = true;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);
void write_config(const std::string& path, const RunConfig& cfg);
std::string config_to_text(const RunConfig& cfg);

/// Known names: optimization, pose-correction, rotation-correction,
/// translation-correction, scale-rectification, local-suppression,
/// adaptive-fusion, nonlinear-align. Throws on anything else.
void apply_ablation(RunConfig& cfg, const std::string& name);

}  // namespace duet
