#pragma once

#include <optional>
#include <string>
#include <vector>

#include "duet/config.hpp"
#include "duet/metrics.hpp"
#include "duet/simulator.hpp"

namespace duet {

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct MetricReport {
  double ate = 0.0;
  double ate_ratio_percent = 0.0;  // ate / gt trajectory length * 100
  std::string alignment_name;

  bool scale_valid = false;
  double scale_mean = 0.0;
  double scale_mean_abs_error = 0.0;
  double scale_std = 0.0;

  bool cloud_valid = false;
  double accuracy = 0.0;
  double completeness = 0.0;
  double chamfer = 0.0;

  size_t keyframe_count = 0;
  size_t submap_count = 0;
  size_t anchor_count = 0;
  size_t active_anchor_count = 0;
  size_t loop_count = 0;
  size_t pgo_runs = 0;
  double lambda_final = 0.0;
  Intrinsics k_global_final;

  std::vector<StageTiming> timings;
};

struct PipelineResult {
  MetricReport report;
  std::vector<int> keyframe_ids;
  std::vector<StampedPose> primary_trajectory;    // estimated, world frame
  std::vector<StampedPose> assistant_trajectory;  // estimated
  std::vector<StampedPose> gt_trajectory;         // ground truth at keyframes
  std::vector<double> scale_series;               // normalized window scales
};

/// simulate -> sub-maps -> rectify -> correct -> PGO -> anchors -> TPS ->
/// export. Deterministic for a fixed config and seed. Writes trajectories,
/// map, anchor table, metric CSV and a per-stage timing table into
/// cfg.output_dir. A stage failure raises std::runtime_error carrying the
/// stage name and the path of a replayable scene file.
PipelineResult run_pipeline(const RunConfig& cfg,
                            const sim::World* prebuilt = nullptr);

void write_metrics_csv(const std::string& path, const MetricReport& report);

}  // namespace duet
