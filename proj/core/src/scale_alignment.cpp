#include "duet/scale_alignment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace duet {

double pair_spacing(const Pose& primary, const Pose& assistant) {
  return (primary.t - assistant.t).norm();
}

double async_pair_spacing(const StampedPose& bracket_lo,
                          const StampedPose& bracket_hi, const Pose& assistant,
                          double t_assistant) {
  const double span = bracket_hi.timestamp - bracket_lo.timestamp;
  if (t_assistant < bracket_lo.timestamp || t_assistant > bracket_hi.timestamp) {
    throw std::invalid_argument("async_pair_spacing: timestamp outside bracket");
  }
  const double alpha = span > 0.0 ? (t_assistant - bracket_lo.timestamp) / span : 0.0;
  const Pose ref = se3_interpolate(bracket_lo.pose, bracket_hi.pose, alpha);
  return pair_spacing(ref, assistant);
}

SpacingEstimate estimate_spacing(const Submap& s, bool sync) {
  SpacingEstimate est;
  est.submap_id = s.id;
  const double eps = 1e-9;

  std::vector<StampedPose> primary;
  for (const auto& f : s.frames) {
    if (f.camera == CameraId::Primary) {
      primary.push_back({f.timestamp, f.local_pose});
    }
  }
  std::sort(primary.begin(), primary.end(),
            [](const StampedPose& a, const StampedPose& b) {
              return a.timestamp < b.timestamp;
            });

  double max_bracket = std::numeric_limits<double>::infinity();
  if (!sync && primary.size() >= 2) {
    std::vector<double> periods;
    for (size_t i = 1; i < primary.size(); ++i) {
      periods.push_back(primary[i].timestamp - primary[i - 1].timestamp);
    }
    std::nth_element(periods.begin(), periods.begin() + periods.size() / 2,
                     periods.end());
    max_bracket = 2.0 * periods[periods.size() / 2];
  }

  for (const auto& f : s.frames) {
    if (f.camera != CameraId::Assistant) continue;
    if (sync) {
      for (const auto& p : primary) {
        if (std::abs(p.timestamp - f.timestamp) <= eps) {
          est.pair_spacings.push_back(pair_spacing(p.pose, f.local_pose));
          break;
        }
      }
    } else {
      auto hi = std::lower_bound(primary.begin(), primary.end(), f.timestamp,
                                 [](const StampedPose& p, double t) {
                                   return p.timestamp < t;
                                 });
      if (hi != primary.end() && std::abs(hi->timestamp - f.timestamp) <= eps) {
        est.pair_spacings.push_back(pair_spacing(hi->pose, f.local_pose));
        continue;
      }
      if (hi == primary.begin() || hi == primary.end()) continue;
      const auto lo = hi - 1;
      if (hi->timestamp - lo->timestamp > max_bracket) continue;
      est.pair_spacings.push_back(
          async_pair_spacing(*lo, *hi, f.local_pose, f.timestamp));
    }
  }

  if (est.pair_spacings.empty()) {
    est.degenerate = true;
    return est;
  }
  double sum = 0.0;
  for (double d : est.pair_spacings) sum += d;
  est.mean_spacing = sum / static_cast<double>(est.pair_spacings.size());
  est.degenerate = !(est.mean_spacing > 0.0);
  return est;
}

void rectify_submap(Submap& s, const SpacingEstimate& spacing,
                    double reference_mean, double previous_scale) {
  double scale = previous_scale;
  if (spacing.degenerate || !(spacing.mean_spacing > 0.0)) {
    s.scale_degenerate = true;
  } else {
    scale = reference_mean / spacing.mean_spacing;
    s.scale_degenerate = false;
  }
  s.scale_factor = scale;
  for (auto& f : s.frames) {
    f.local_pose.t *= scale;
    for (double& d : f.depth.data) d *= scale;
  }
}

Pose align_submap_to_world(const Pose& local_pose_of_common,
                           const Pose& world_pose_of_common) {
  return world_pose_of_common * local_pose_of_common.inverse();
}

int first_common_frame(const Submap& s) {
  if (s.common_frame_ids.empty()) return -1;
  return *std::min_element(s.common_frame_ids.begin(), s.common_frame_ids.end());
}

}  // namespace duet
