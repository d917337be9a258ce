#pragma once

#include <optional>
#include <span>
#include <vector>

#include "duet/geometry.hpp"
#include "duet/grid.hpp"

namespace duet {

struct PipelineConfig {
  double tau_flow = 25.0;  // pixels of accumulated disparity per keyframe
  int n_max = 15;          // new primary keyframes per sub-map
  int n_overlap = 3;       // bridge frames shared with the predecessor
  bool sync = true;
};

struct SubmapFrame {
  int frame_id = 0;
  CameraId camera = CameraId::Primary;
  double timestamp = 0.0;
  Pose local_pose;  // estimated, first listed frame is the identity
  Grid depth;       // estimated depths (scaled, possibly warped)
  Grid confidence;
};

/// One inference window's output bundle plus the bookkeeping the pipeline
/// attaches to it (bridge frames, scale factor, world alignment).
struct Submap {
  int id = 0;
  Intrinsics k_est;
  std::vector<SubmapFrame> frames;  // primary frames in stream order, then assistants
  std::vector<int> primary_frame_ids;
  std::vector<int> assistant_frame_ids;
  std::vector<int> common_frame_ids;       // shared with the predecessor
  std::vector<int> common_next_frame_ids;  // same bridge, recorded on the predecessor
  std::vector<int> loop_frame_ids;         // historical frames appended on loop closure
  double scale_factor = 1.0;          // s_k, written by rectification
  bool scale_degenerate = false;
  Pose world_from_local;              // T_{k->w}, written by alignment

  const SubmapFrame* find(int frame_id, CameraId camera) const;
  SubmapFrame* find(int frame_id, CameraId camera);
};

/// Incremental keyframe trigger: a frame is selected when the disparity
/// accumulated since the last keyframe exceeds tau_flow. The first frame is
/// always selected. Batches close at n_max keyframes.
class KeyframeSelector {
 public:
  explicit KeyframeSelector(const PipelineConfig& cfg) : cfg_(cfg) {}

  /// Feeds one frame with its disparity relative to the previous frame.
  /// Returns true when the frame becomes a keyframe.
  bool push(int frame_id, double disparity);

  /// Keyframes not yet packed into a batch.
  std::span<const int> pending() const { return pending_; }

  /// Extracts up to n_max pending keyframes as the next batch.
  std::vector<int> take_batch();

  bool batch_ready() const { return static_cast<int>(pending_.size()) >= cfg_.n_max; }

 private:
  PipelineConfig cfg_;
  std::vector<int> pending_;
  double accumulated_ = 0.0;
  bool first_ = true;
};

/// Splits a whole disparity stream into keyframe batches of at most n_max.
std::vector<std::vector<int>> select_keyframes(std::span<const double> disparities,
                                               const PipelineConfig& cfg);

struct AssistantStreamEntry {
  int frame_id = 0;
  double timestamp = 0.0;
};

/// Sync mode: exact timestamp match per keyframe (throws std::runtime_error
/// when one is missing). Async mode: nearest timestamp with de-duplication;
/// earlier keyframes win ties and later ones take their next-nearest.
std::vector<int> associate_assistant(std::span<const double> keyframe_times,
                                     std::span<const AssistantStreamEntry> stream,
                                     bool sync);

/// Frame set layout for one sub-map: the previous sub-map's tail (up to
/// n_overlap frames) as the bridge, then the new keyframes.
struct SubmapPlan {
  std::vector<int> primary_frames;  // bridge first
  std::vector<int> common_frames;
  std::vector<int> assistant_frames;
  std::vector<int> loop_frames;
};

SubmapPlan plan_submap(std::span<const int> new_keyframes,
                       std::span<const int> assistant_frames,
                       const Submap* previous, int n_overlap,
                       std::span<const int> loop_frames = {});

}  // namespace duet
