#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "duet/geometry.hpp"
#include "duet/submap.hpp"

namespace duet {

struct AnchorConfig {
  int n_grid = 24;                   // grid cells per image axis
  double eta_proj = 0.02;            // relative depth-consistency margin
  double tau_conf = 0.5;             // confidence threshold for seeding
  double suppression_radius = 0.4;
  double weight_floor = 1e-8;        // floor on squared center distance
  int backward_depth_cap = 10;       // sub-maps per backward event
  int max_tps_controls = 800;        // per-sub-map bound on the dense solve
  bool adaptive_fusion = true;       // false: arithmetic mean
  std::uint64_t seed = 1;
};

enum class AnchorState { Active, Deactivated };

struct AnchorObservation {
  int frame_id = 0;
  Vec2 pixel;
};

/// A physical point with one local coordinate per observing sub-map, the
/// pixels it projects to, and a fused global coordinate.
struct Anchor {
  long id = -1;
  std::map<int, Vec3> local_coords;  // sub-map id -> P_local
  std::map<int, std::vector<AnchorObservation>> observations;
  Vec3 global = Vec3::Zero();
  bool fused = false;
  AnchorState state = AnchorState::Active;
  long seed_tag = -1;  // provenance of the seeding candidate, -1 = random
  int created_in = -1;
  int seed_frame = -1;
  Vec2 seed_pixel = Vec2::Zero();

  /// N_obs: number of observing sub-maps.
  int observation_count() const { return static_cast<int>(local_coords.size()); }
};

/// floor(pixel / cell size) assignment over the image domain.
struct AnchorGrid {
  int n_grid = 0;
  double cell_w = 0.0;
  double cell_h = 0.0;

  static AnchorGrid for_image(int width, int height, int n_grid);
  int cell_of(const Vec2& pixel) const;  // flattened index
};

/// Externally supplied seed pixel (takes precedence over random sampling in
/// its cell); `tag` travels onto the anchor for provenance checks.
struct SeedCandidate {
  int frame_id = 0;
  Vec2 pixel;
  long tag = -1;
};

/// World placement of one sub-map for fusion.
struct SubmapWorldInfo {
  Pose world_from_local;
  Vec3 center_optical_world = Vec3::Zero();  // central keyframe optical center
};

/// Weighted fusion of one anchor; weights 1/max(dist^2, floor) against the
/// central-keyframe optical centers, or uniform when adaptive is false.
Vec3 fuse_anchor(const Anchor& a, const std::map<int, SubmapWorldInfo>& info,
                 double weight_floor, bool adaptive = true);

/// Assigns Active/Deactivated per the strict-inequality neighbourhood rule.
/// Exact: equals brute-force radius search.
void suppress(std::span<Anchor> anchors, double radius);

class AnchorStore {
 public:
  explicit AnchorStore(const AnchorConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {}

  /// Copies anchors of `prev` seen on the bridge into `next` (no
  /// re-verification; ids preserved). Call before extraction on `next`.
  void propagate_forward(const Submap& prev, const Submap& next);

  /// Grid-based seeding on the first primary frame followed by iterative
  /// densification over the remaining frames.
  void extract_and_densify(const Submap& s,
                           std::span<const SeedCandidate> candidates = {});

  /// Pushes anchors newly created in chain[index] backwards through the
  /// bridges, verifying each step; recursion capped by the config.
  void propagate_backward(std::span<const Submap> chain, size_t index);

  /// Bi-directional propagation across a loop-closure frame shared by the
  /// current and a historical sub-map (verified both ways).
  void propagate_loop(const Submap& current, const Submap& historical,
                      int loop_frame_id);

  /// Re-fuses anchors observed in `touched_submap` (all anchors when -1).
  void fuse(const std::map<int, SubmapWorldInfo>& info, int touched_submap = -1);

  void run_suppression();
  void set_all_active();

  std::span<const Anchor> anchors() const { return anchors_; }
  std::span<Anchor> anchors_mutable() { return anchors_; }

  /// id, N_obs, state, P_global per line.
  void write_csv(const std::string& path) const;

 private:
  bool attach_anchor(Anchor& a, int from_submap, const Submap& to, int frame_id,
                     bool verify);
  void record_observations(Anchor& a, const Submap& s, const Vec3& local);

  AnchorConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<Anchor> anchors_;
  long next_id_ = 0;
};

}  // namespace duet
