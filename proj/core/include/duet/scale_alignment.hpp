#pragma once

#include <vector>

#include "duet/geometry.hpp"
#include "duet/submap.hpp"

namespace duet {

/// Per-sub-map spacing statistics from the primary-assistant pairs.
struct SpacingEstimate {
  int submap_id = 0;
  std::vector<double> pair_spacings;  // d_{i,k}
  double mean_spacing = 0.0;          // mean of the valid pairs
  bool degenerate = false;            // no valid pair found
};

/// Euclidean distance between the optical centers.
double pair_spacing(const Pose& primary, const Pose& assistant);

/// Spacing against the primary pose interpolated at the assistant
/// timestamp. Throws std::invalid_argument when t_assistant falls outside
/// the bracket.
double async_pair_spacing(const StampedPose& bracket_lo,
                          const StampedPose& bracket_hi, const Pose& assistant,
                          double t_assistant);

/// Collects d_{i,k} from the sub-map's local poses. Sync mode pairs exact
/// timestamps; async mode interpolates the bracketing primary frames and
/// discards pairs whose bracket exceeds twice the median primary period.
SpacingEstimate estimate_spacing(const Submap& s, bool sync);

/// Multiplies every local translation and depth value by
/// s_k = reference_mean / mean_spacing. Rotations and confidences are
/// untouched. A degenerate sub-map (no valid pairs or non-positive mean)
/// reuses previous_scale and is flagged.
void rectify_submap(Submap& s, const SpacingEstimate& spacing,
                    double reference_mean, double previous_scale = 1.0);

/// T_{k->w} = T_{w,f} * (T_{k,f})^-1. Takes only poses.
Pose align_submap_to_world(const Pose& local_pose_of_common,
                           const Pose& world_pose_of_common);

/// Lowest frame id among the declared common frames, -1 when none.
int first_common_frame(const Submap& s);

}  // namespace duet
