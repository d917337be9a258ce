#include "duet/anchors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace duet {

AnchorGrid AnchorGrid::for_image(int width, int height, int n_grid) {
  AnchorGrid g;
  g.n_grid = n_grid;
  g.cell_w = static_cast<double>(width) / n_grid;
  g.cell_h = static_cast<double>(height) / n_grid;
  return g;
}

int AnchorGrid::cell_of(const Vec2& pixel) const {
  const int cx = std::clamp(static_cast<int>(pixel.x() / cell_w), 0, n_grid - 1);
  const int cy = std::clamp(static_cast<int>(pixel.y() / cell_h), 0, n_grid - 1);
  return cy * n_grid + cx;
}

Vec3 fuse_anchor(const Anchor& a, const std::map<int, SubmapWorldInfo>& info,
                 double weight_floor, bool adaptive) {
  if (a.local_coords.empty()) {
    throw std::invalid_argument("fuse_anchor: anchor without observations");
  }
  Vec3 sum = Vec3::Zero();
  double weight_sum = 0.0;
  for (const auto& [submap_id, local] : a.local_coords) {
    const auto it = info.find(submap_id);
    if (it == info.end()) continue;
    const Vec3 world = it->second.world_from_local.apply(local);
    double w = 1.0;
    if (adaptive) {
      const double d2 = (world - it->second.center_optical_world).squaredNorm();
      w = 1.0 / std::max(d2, weight_floor);
    }
    sum += w * world;
    weight_sum += w;
  }
  if (weight_sum <= 0.0) {
    throw std::invalid_argument("fuse_anchor: no observation with a known sub-map pose");
  }
  return sum / weight_sum;
}

void suppress(std::span<Anchor> anchors, double radius) {
  // Voxel hash with cell size = radius; a radius query only needs the 27
  // neighbouring cells. Distances compare exactly as in the brute force.
  struct CellKey {
    long x, y, z;
    bool operator==(const CellKey&) const = default;
  };
  struct CellHash {
    size_t operator()(const CellKey& k) const {
      return static_cast<size_t>(k.x * 73856093L ^ k.y * 19349663L ^ k.z * 83492791L);
    }
  };
  std::unordered_map<CellKey, std::vector<size_t>, CellHash> cells;
  auto key_of = [&](const Vec3& p) {
    return CellKey{static_cast<long>(std::floor(p.x() / radius)),
                   static_cast<long>(std::floor(p.y() / radius)),
                   static_cast<long>(std::floor(p.z() / radius))};
  };
  for (size_t i = 0; i < anchors.size(); ++i) {
    if (!anchors[i].fused) continue;
    cells[key_of(anchors[i].global)].push_back(i);
  }
  const double r2 = radius * radius;
  for (auto& a : anchors) {
    if (!a.fused) continue;
    a.state = AnchorState::Active;
    const CellKey base = key_of(a.global);
    bool deactivated = false;
    for (long dx = -1; dx <= 1 && !deactivated; ++dx) {
      for (long dy = -1; dy <= 1 && !deactivated; ++dy) {
        for (long dz = -1; dz <= 1 && !deactivated; ++dz) {
          const auto it = cells.find({base.x + dx, base.y + dy, base.z + dz});
          if (it == cells.end()) continue;
          for (size_t j : it->second) {
            const Anchor& q = anchors[j];
            if (q.id == a.id) continue;
            if ((q.global - a.global).squaredNorm() <= r2 &&
                q.observation_count() > a.observation_count()) {
              deactivated = true;
              break;
            }
          }
        }
      }
    }
    if (deactivated) a.state = AnchorState::Deactivated;
  }
}

namespace {

constexpr double kMinDepth = 0.05;

const SubmapFrame* primary_frame(const Submap& s, int frame_id) {
  return s.find(frame_id, CameraId::Primary);
}

bool project_into(const SubmapFrame& frame, const Intrinsics& k, const Vec3& local,
                  Vec2* pixel, double* depth) {
  const Vec3 cam = frame.local_pose.inverse().apply(local);
  if (cam.z() < kMinDepth) return false;
  const Vec2 px = k.project(cam);
  if (!frame.depth.inside(px)) return false;
  if (pixel) *pixel = px;
  if (depth) *depth = cam.z();
  return true;
}

// eta-consistency of a local point against one frame's depth estimate.
bool depth_consistent(const SubmapFrame& frame, const Intrinsics& k,
                      const Vec3& local, double eta, Vec2* pixel_out) {
  Vec2 px;
  double z = 0.0;
  if (!project_into(frame, k, local, &px, &z)) return false;
  const double est = frame.depth.sample_strict(px);
  if (est <= 0.0) return false;
  if (std::abs(z - est) > eta * est) return false;
  if (pixel_out) *pixel_out = px;
  return true;
}

}  // namespace

void AnchorStore::record_observations(Anchor& a, const Submap& s, const Vec3& local) {
  auto& obs = a.observations[s.id];
  obs.clear();
  for (int fid : s.primary_frame_ids) {
    const SubmapFrame* f = primary_frame(s, fid);
    if (!f) continue;
    Vec2 px;
    if (depth_consistent(*f, s.k_est, local, cfg_.eta_proj, &px)) {
      obs.push_back({fid, px});
    }
  }
  for (int fid : s.loop_frame_ids) {
    const SubmapFrame* f = primary_frame(s, fid);
    if (!f) continue;
    Vec2 px;
    if (depth_consistent(*f, s.k_est, local, cfg_.eta_proj, &px)) {
      obs.push_back({fid, px});
    }
  }
}

bool AnchorStore::attach_anchor(Anchor& a, int from_submap, const Submap& to,
                                int frame_id, bool verify) {
  if (a.local_coords.count(to.id)) return false;  // already known there
  const auto obs_it = a.observations.find(from_submap);
  if (obs_it == a.observations.end()) return false;
  const AnchorObservation* obs = nullptr;
  for (const auto& o : obs_it->second) {
    if (o.frame_id == frame_id) {
      obs = &o;
      break;
    }
  }
  if (!obs) return false;

  const SubmapFrame* frame = primary_frame(to, frame_id);
  if (!frame) return false;
  const double depth = frame->depth.sample_strict(obs->pixel);
  if (depth <= 0.0) return false;
  const Vec3 local =
      frame->local_pose.apply(to.k_est.back_project(obs->pixel, depth));

  if (verify) {
    int consistent = 0;
    for (int fid : to.primary_frame_ids) {
      if (fid == frame_id) continue;
      const SubmapFrame* f = primary_frame(to, fid);
      if (f && depth_consistent(*f, to.k_est, local, cfg_.eta_proj, nullptr)) {
        ++consistent;
        break;
      }
    }
    if (consistent == 0) return false;
  }

  a.local_coords[to.id] = local;
  record_observations(a, to, local);
  return true;
}

void AnchorStore::propagate_forward(const Submap& prev, const Submap& next) {
  for (auto& a : anchors_) {
    if (!a.local_coords.count(prev.id)) continue;
    for (int fid : next.common_frame_ids) {
      if (attach_anchor(a, prev.id, next, fid, /*verify=*/false)) break;
    }
  }
}

void AnchorStore::extract_and_densify(const Submap& s,
                                      std::span<const SeedCandidate> candidates) {
  if (s.primary_frame_ids.empty()) return;
  const SubmapFrame* first = primary_frame(s, s.primary_frame_ids.front());
  if (!first || first->depth.width == 0) return;
  const AnchorGrid grid =
      AnchorGrid::for_image(first->depth.width, first->depth.height, cfg_.n_grid);

  // Anchors carrying a coordinate in this sub-map, extended as extraction
  // creates new ones; only these can cover cells.
  std::vector<size_t> in_submap;
  for (size_t i = 0; i < anchors_.size(); ++i) {
    if (anchors_[i].local_coords.count(s.id)) in_submap.push_back(i);
  }

  for (int fid : s.primary_frame_ids) {
    const SubmapFrame* frame = primary_frame(s, fid);
    if (!frame) continue;

    // Cells already covered by projections of established anchors. The
    // projections themselves also veto candidates within a pixel, so a
    // point straddling a cell boundary cannot seed twice.
    std::set<int> covered;
    std::vector<Vec2> covered_pixels;
    for (size_t idx : in_submap) {
      const auto& a = anchors_[idx];
      Vec2 px;
      if (project_into(*frame, s.k_est, a.local_coords.at(s.id), &px, nullptr)) {
        covered.insert(grid.cell_of(px));
        covered_pixels.push_back(px);
      }
    }

    // External candidates first, one per empty cell.
    std::set<int> claimed;  // cells claimed in this frame pass
    auto try_seed = [&](const Vec2& px, long tag) -> bool {
      const int cell = grid.cell_of(px);
      if (covered.count(cell) || claimed.count(cell)) return false;
      for (const auto& cp : covered_pixels) {
        if ((cp - px).squaredNorm() < 1.0) return false;
      }
      claimed.insert(cell);
      if (frame->confidence.sample(px) <= cfg_.tau_conf) return false;
      const double depth = frame->depth.sample_strict(px);
      if (depth <= 0.0) return false;
      const Vec3 local = frame->local_pose.apply(s.k_est.back_project(px, depth));

      bool verified = false;
      for (int other : s.primary_frame_ids) {
        if (other == fid) continue;
        const SubmapFrame* f = primary_frame(s, other);
        if (f && depth_consistent(*f, s.k_est, local, cfg_.eta_proj, nullptr)) {
          verified = true;
          break;
        }
      }
      if (!verified) return false;

      Anchor a;
      a.id = next_id_++;
      a.created_in = s.id;
      a.seed_tag = tag;
      a.seed_frame = fid;
      a.seed_pixel = px;
      a.local_coords[s.id] = local;
      record_observations(a, s, local);
      anchors_.push_back(std::move(a));
      in_submap.push_back(anchors_.size() - 1);
      covered.insert(cell);
      covered_pixels.push_back(px);
      return true;
    };

    for (const auto& c : candidates) {
      if (c.frame_id != fid) continue;
      if (!frame->depth.inside(c.pixel)) continue;
      try_seed(c.pixel, c.tag);
    }

    // Random sampling over the remaining empty cells: one uniformly drawn
    // confident pixel per cell, in deterministic cell order.
    std::vector<std::vector<Vec2>> cell_pixels(
        static_cast<size_t>(grid.n_grid) * grid.n_grid);
    for (int y = 0; y < frame->depth.height; ++y) {
      for (int x = 0; x < frame->depth.width; ++x) {
        if (frame->confidence.at(x, y) > cfg_.tau_conf && frame->depth.at(x, y) > 0.0) {
          cell_pixels[grid.cell_of(Vec2(x, y))].push_back(Vec2(x, y));
        }
      }
    }
    for (size_t cell = 0; cell < cell_pixels.size(); ++cell) {
      if (cell_pixels[cell].empty()) continue;
      if (covered.count(static_cast<int>(cell)) || claimed.count(static_cast<int>(cell))) {
        continue;
      }
      std::uniform_int_distribution<size_t> pick(0, cell_pixels[cell].size() - 1);
      try_seed(cell_pixels[cell][pick(rng_)], -1);
    }
  }
}

void AnchorStore::propagate_backward(std::span<const Submap> chain, size_t index) {
  if (index == 0 || index >= chain.size()) return;
  const int created_here = chain[index].id;
  for (auto& a : anchors_) {
    if (a.created_in != created_here) continue;
    size_t cur = index;
    for (int depth = 0; depth < cfg_.backward_depth_cap && cur > 0; ++depth) {
      const Submap& current = chain[cur];
      const Submap& prev = chain[cur - 1];
      bool stepped = false;
      for (int fid : current.common_frame_ids) {
        if (attach_anchor(a, current.id, prev, fid, /*verify=*/true)) {
          stepped = true;
          break;
        }
      }
      if (!stepped) break;
      --cur;
    }
  }
}

void AnchorStore::propagate_loop(const Submap& current, const Submap& historical,
                                 int loop_frame_id) {
  for (auto& a : anchors_) {
    if (a.local_coords.count(current.id) && !a.local_coords.count(historical.id)) {
      attach_anchor(a, current.id, historical, loop_frame_id, /*verify=*/true);
    } else if (a.local_coords.count(historical.id) &&
               !a.local_coords.count(current.id)) {
      attach_anchor(a, historical.id, current, loop_frame_id, /*verify=*/true);
    }
  }
}

void AnchorStore::fuse(const std::map<int, SubmapWorldInfo>& info, int touched_submap) {
  for (auto& a : anchors_) {
    if (touched_submap >= 0 && !a.local_coords.count(touched_submap)) continue;
    if (a.local_coords.empty()) continue;
    a.global = fuse_anchor(a, info, cfg_.weight_floor, cfg_.adaptive_fusion);
    a.fused = true;
  }
}

void AnchorStore::run_suppression() {
  suppress(anchors_, cfg_.suppression_radius);
}

void AnchorStore::set_all_active() {
  for (auto& a : anchors_) a.state = AnchorState::Active;
}

void AnchorStore::write_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open anchor table: " + path);
  os << "id,n_obs,state,x,y,z\n";
  char line[256];
  for (const auto& a : anchors_) {
    std::snprintf(line, sizeof(line), "%ld,%d,%s,%.9g,%.9g,%.9g\n", a.id,
                  a.observation_count(),
                  a.state == AnchorState::Active ? "active" : "deactivated",
                  a.global.x(), a.global.y(), a.global.z());
    os << line;
  }
}

}  // namespace duet
