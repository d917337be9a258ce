#include "duet/submap.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

namespace duet {

const SubmapFrame* Submap::find(int frame_id, CameraId camera) const {
  for (const auto& f : frames) {
    if (f.frame_id == frame_id && f.camera == camera) return &f;
  }
  return nullptr;
}

SubmapFrame* Submap::find(int frame_id, CameraId camera) {
  return const_cast<SubmapFrame*>(
      static_cast<const Submap*>(this)->find(frame_id, camera));
}

bool KeyframeSelector::push(int frame_id, double disparity) {
  if (disparity < 0.0) {
    throw std::invalid_argument("KeyframeSelector: negative disparity");
  }
  if (first_) {
    first_ = false;
    pending_.push_back(frame_id);
    accumulated_ = 0.0;
    return true;
  }
  accumulated_ += disparity;
  if (accumulated_ > cfg_.tau_flow) {
    pending_.push_back(frame_id);
    accumulated_ = 0.0;
    return true;
  }
  return false;
}

std::vector<int> KeyframeSelector::take_batch() {
  const size_t n = std::min<size_t>(pending_.size(), static_cast<size_t>(cfg_.n_max));
  std::vector<int> batch(pending_.begin(), pending_.begin() + n);
  pending_.erase(pending_.begin(), pending_.begin() + n);
  return batch;
}

std::vector<std::vector<int>> select_keyframes(std::span<const double> disparities,
                                               const PipelineConfig& cfg) {
  KeyframeSelector sel(cfg);
  for (size_t i = 0; i < disparities.size(); ++i) {
    sel.push(static_cast<int>(i), disparities[i]);
  }
  std::vector<std::vector<int>> batches;
  while (!sel.pending().empty()) {
    batches.push_back(sel.take_batch());
  }
  return batches;
}

std::vector<int> associate_assistant(std::span<const double> keyframe_times,
                                     std::span<const AssistantStreamEntry> stream,
                                     bool sync) {
  if (stream.empty()) {
    throw std::invalid_argument("associate_assistant: empty assistant stream");
  }
  std::vector<int> out;
  out.reserve(keyframe_times.size());
  std::set<int> used;
  const double eps = 1e-9;
  for (const double t : keyframe_times) {
    if (sync) {
      const AssistantStreamEntry* hit = nullptr;
      for (const auto& e : stream) {
        if (std::abs(e.timestamp - t) <= eps) {
          hit = &e;
          break;
        }
      }
      if (!hit) {
        throw std::runtime_error("associate_assistant: no exact timestamp match in sync mode");
      }
      if (used.insert(hit->frame_id).second) out.push_back(hit->frame_id);
    } else {
      // Earlier keyframes win: pick the nearest assistant frame not yet used.
      const AssistantStreamEntry* best = nullptr;
      double best_dist = std::numeric_limits<double>::infinity();
      for (const auto& e : stream) {
        if (used.count(e.frame_id)) continue;
        const double dist = std::abs(e.timestamp - t);
        if (dist < best_dist) {
          best_dist = dist;
          best = &e;
        }
      }
      if (best) {
        used.insert(best->frame_id);
        out.push_back(best->frame_id);
      }
    }
  }
  return out;
}

SubmapPlan plan_submap(std::span<const int> new_keyframes,
                       std::span<const int> assistant_frames,
                       const Submap* previous, int n_overlap,
                       std::span<const int> loop_frames) {
  SubmapPlan plan;
  if (previous) {
    const auto& prev_primary = previous->primary_frame_ids;
    const size_t overlap =
        std::min<size_t>(static_cast<size_t>(n_overlap), prev_primary.size());
    plan.common_frames.assign(prev_primary.end() - overlap, prev_primary.end());
    plan.primary_frames = plan.common_frames;
  }
  plan.primary_frames.insert(plan.primary_frames.end(), new_keyframes.begin(),
                             new_keyframes.end());
  plan.assistant_frames.assign(assistant_frames.begin(), assistant_frames.end());
  plan.loop_frames.assign(loop_frames.begin(), loop_frames.end());
  return plan;
}

}  // namespace duet
