#include "duet/simulator.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>

#include "duet/pose_correction.hpp"

namespace duet::sim {

namespace {

struct PathState {
  double x = 0.0;
  double z = 0.0;
  double heading = 0.0;
};

// Arc-length parameterized planar path starting at the origin heading +z.
class Path {
 public:
  Path(TrajectoryKind kind, double length, double arc_turn, std::uint64_t seed)
      : kind_(kind), length_(length) {
    switch (kind) {
      case TrajectoryKind::Line:
        curvatures_ = {0.0};
        segment_length_ = length;
        break;
      case TrajectoryKind::Arc:
        curvatures_ = {arc_turn / length};
        segment_length_ = length;
        break;
      case TrajectoryKind::Loop:
        curvatures_ = {2.0 * M_PI / length};
        segment_length_ = length;
        break;
      case TrajectoryKind::RandomWalk: {
        std::mt19937_64 gen(seed ^ 0x9e3779b97f4a7c15ull);
        std::uniform_real_distribution<double> d(-1.0, 1.0);
        const int segments = 24;
        segment_length_ = length / segments;
        for (int i = 0; i < segments; ++i) {
          curvatures_.push_back(d(gen) * 2.0 * M_PI / length);
        }
        break;
      }
    }
    // Precompute segment-start states.
    PathState st;
    starts_.push_back(st);
    for (double k : curvatures_) {
      st = advance(st, k, segment_length_);
      starts_.push_back(st);
    }
  }

  PathState at(double s) const {
    s = std::clamp(s, 0.0, length_);
    size_t seg = std::min(static_cast<size_t>(s / segment_length_),
                          curvatures_.size() - 1);
    const double local = s - static_cast<double>(seg) * segment_length_;
    return advance(starts_[seg], curvatures_[seg], local);
  }

  double curvature_at(double s) const {
    s = std::clamp(s, 0.0, length_);
    size_t seg = std::min(static_cast<size_t>(s / segment_length_),
                          curvatures_.size() - 1);
    return curvatures_[seg];
  }

  bool single_arc() const {
    return kind_ == TrajectoryKind::Arc || kind_ == TrajectoryKind::Loop;
  }

 private:
  static PathState advance(const PathState& st, double k, double ds) {
    PathState out;
    if (std::abs(k) < 1e-12) {
      out.x = st.x + ds * std::sin(st.heading);
      out.z = st.z + ds * std::cos(st.heading);
      out.heading = st.heading;
    } else {
      out.heading = st.heading + k * ds;
      out.x = st.x + (std::cos(st.heading) - std::cos(out.heading)) / k;
      out.z = st.z + (std::sin(out.heading) - std::sin(st.heading)) / k;
    }
    return out;
  }

  TrajectoryKind kind_;
  double length_;
  double segment_length_ = 0.0;
  std::vector<double> curvatures_;
  std::vector<PathState> starts_;
};

Vec3 heading_right(double psi) { return Vec3(std::cos(psi), 0.0, -std::sin(psi)); }

struct Undulation {
  double height_omega = 0.0;
  double height_amp = 0.0;
  double roll_omega = 0.0;
  double roll_amp = 0.0;

  Undulation(const WorldConfig& cfg) {
    if (cfg.height_amplitude > 0.0 && cfg.height_period > 0.0) {
      const double cycles = std::max(1.0, std::round(cfg.length / cfg.height_period));
      height_omega = 2.0 * M_PI * cycles / cfg.length;
      height_amp = cfg.height_amplitude;
    }
    if (cfg.roll_amplitude > 0.0 && cfg.roll_period > 0.0) {
      const double cycles = std::max(1.0, std::round(cfg.length / cfg.roll_period));
      roll_omega = 2.0 * M_PI * cycles / cfg.length;
      roll_amp = cfg.roll_amplitude;
    }
  }
};

Pose pose_from_state(const PathState& st, double s, double camera_height,
                     const Undulation& u) {
  Pose p;
  const double dy_ds = u.height_amp * u.height_omega * std::cos(u.height_omega * s);
  Vec3 forward(std::sin(st.heading), dy_ds, std::cos(st.heading));
  forward.normalize();
  const Vec3 down(0.0, -1.0, 0.0);
  Vec3 right = down.cross(forward);
  right.normalize();
  p.R.col(0) = right;
  p.R.col(1) = forward.cross(right);
  p.R.col(2) = forward;
  if (u.roll_amp > 0.0) {
    p.R = p.R * rodrigues(Vec3(0.0, 0.0, u.roll_amp * std::sin(u.roll_omega * s)));
  }
  p.t = Vec3(st.x, camera_height + u.height_amp * std::sin(u.height_omega * s), st.z);
  return p;
}

// Analytic world surfaces: the ground plane plus corridor walls
// (planes for straight paths, concentric cylinders for arcs).
struct Surfaces {
  double wall_height = 0.0;
  double max_depth = 0.0;
  bool has_plane_walls = false;
  double wall_x = 0.0;
  bool has_cylinder_walls = false;
  Vec2 cylinder_center{0.0, 0.0};
  double radius_inner = 0.0;
  double radius_outer = 0.0;

  // Returns the z-depth style ray parameter (direction has unit camera-z
  // component), or 0 when nothing within max_depth is hit.
  double cast(const Vec3& origin, const Vec3& dir) const {
    double best = max_depth + 1.0;
    // Ground plane y = 0.
    if (dir.y() < -1e-12) {
      const double t = -origin.y() / dir.y();
      if (t > 1e-6 && t < best) best = t;
    }
    auto consider_wall_hit = [&](double t) {
      if (t <= 1e-6 || t >= best) return;
      const double y = origin.y() + t * dir.y();
      if (y >= 0.0 && y <= wall_height) best = t;
    };
    if (has_plane_walls) {
      for (double c : {wall_x, -wall_x}) {
        if (std::abs(dir.x()) > 1e-12) consider_wall_hit((c - origin.x()) / dir.x());
      }
    }
    if (has_cylinder_walls) {
      const Vec2 o(origin.x() - cylinder_center.x(), origin.z() - cylinder_center.y());
      const Vec2 d(dir.x(), dir.z());
      const double a = d.squaredNorm();
      if (a > 1e-16) {
        for (double r : {radius_inner, radius_outer}) {
          if (r <= 0.0) continue;
          const double b = 2.0 * o.dot(d);
          const double c = o.squaredNorm() - r * r;
          const double disc = b * b - 4.0 * a * c;
          if (disc < 0.0) continue;
          const double sq = std::sqrt(disc);
          consider_wall_hit((-b - sq) / (2.0 * a));
          consider_wall_hit((-b + sq) / (2.0 * a));
        }
      }
    }
    return best <= max_depth ? best : 0.0;
  }
};

Surfaces make_surfaces(const WorldConfig& cfg, const Path& path) {
  Surfaces s;
  s.wall_height = cfg.wall_height;
  s.max_depth = cfg.max_depth;
  if (cfg.trajectory == TrajectoryKind::Line) {
    s.has_plane_walls = true;
    s.wall_x = cfg.corridor_half_width;
  } else if (path.single_arc()) {
    const double k = path.curvature_at(0.0);
    const double radius = 1.0 / k;
    s.has_cylinder_walls = true;
    s.cylinder_center = Vec2(radius, 0.0);
    s.radius_inner = radius - cfg.corridor_half_width;
    s.radius_outer = radius + cfg.corridor_half_width;
  }
  return s;
}

void render_frame(const WorldConfig& cfg, const Surfaces& surf, const Pose& pose,
                  Grid& depth, Grid& confidence) {
  depth = Grid(cfg.image_width, cfg.image_height);
  confidence = Grid(cfg.image_width, cfg.image_height);
  for (int y = 0; y < cfg.image_height; ++y) {
    for (int x = 0; x < cfg.image_width; ++x) {
      const Vec3 dir_cam((x - cfg.intrinsics.cx) / cfg.intrinsics.fx,
                         (y - cfg.intrinsics.cy) / cfg.intrinsics.fy, 1.0);
      const double t = surf.cast(pose.t, pose.R * dir_cam);
      depth.at(x, y) = t;
      confidence.at(x, y) =
          t > 0.0 ? std::clamp(1.0 - 0.8 * t / cfg.max_depth, 0.0, 1.0) : 0.0;
    }
  }
}

bool project_landmark(const WorldConfig& cfg, const Surfaces& surf,
                      const Pose& pose, const Vec3& landmark, Vec2* pixel) {
  const Vec3 cam = pose.inverse().apply(landmark);
  if (cam.z() < 0.2 || cam.z() > cfg.max_depth) return false;
  const Vec2 px = cfg.intrinsics.project(cam);
  if (px.x() < 0.0 || px.y() < 0.0 || px.x() > cfg.image_width - 1.0 ||
      px.y() > cfg.image_height - 1.0) {
    return false;
  }
  // Occlusion: the surface hit along this exact ray must not be nearer.
  const Vec3 dir_cam((px.x() - cfg.intrinsics.cx) / cfg.intrinsics.fx,
                     (px.y() - cfg.intrinsics.cy) / cfg.intrinsics.fy, 1.0);
  const double t = surf.cast(pose.t, pose.R * dir_cam);
  if (t > 0.0 && t < cam.z() - std::max(1e-9, 1e-9 * cam.z()) - 1e-6) return false;
  if (pixel) *pixel = px;
  return true;
}

}  // namespace

Pose World::pose_at(double time, CameraId camera) const {
  const double speed =
      config.length / ((config.frame_count - 1) * config.frame_dt);
  const Path path(config.trajectory, config.length, config.arc_turn, config.seed);
  const double s = speed * time;
  Pose p = pose_from_state(path.at(s), s, config.camera_height, Undulation(config));
  if (camera == CameraId::Assistant) p = p * config.rig_extrinsic;
  return p;
}

World generate_world(const WorldConfig& cfg_in) {
  WorldConfig cfg = cfg_in;
  if (cfg.frame_count < 2) throw std::invalid_argument("generate_world: frame_count < 2");
  if (cfg.rig_spacing <= 0.0) throw std::invalid_argument("generate_world: rig_spacing <= 0");
  if (cfg.landmark_count <= 0) throw std::invalid_argument("generate_world: zero landmarks");
  if (cfg.length <= 0.0) throw std::invalid_argument("generate_world: length <= 0");

  // Pin the extrinsic baseline norm to the configured spacing.
  if (cfg.rig_extrinsic.t.norm() < 1e-12) {
    cfg.rig_extrinsic.t = Vec3(cfg.rig_spacing, 0.0, 0.0);
  } else {
    cfg.rig_extrinsic.t *= cfg.rig_spacing / cfg.rig_extrinsic.t.norm();
  }

  World world;
  world.config = cfg;

  const Path path(cfg.trajectory, cfg.length, cfg.arc_turn, cfg.seed);
  const Surfaces surf = make_surfaces(cfg, path);
  const Undulation undulation(cfg);
  const double speed = cfg.length / ((cfg.frame_count - 1) * cfg.frame_dt);

  auto make_frame = [&](int i, CameraId cam) {
    FrameObservation obs;
    obs.frame_id = i;
    obs.camera = cam;
    obs.timestamp = i * cfg.frame_dt +
                    (cam == CameraId::Assistant ? cfg.assistant_time_offset : 0.0);
    const double s = speed * obs.timestamp;
    Pose p = pose_from_state(path.at(s), s, cfg.camera_height, undulation);
    if (cam == CameraId::Assistant) p = p * cfg.rig_extrinsic;
    obs.true_pose = p;
    render_frame(cfg, surf, p, obs.depth, obs.confidence);
    return obs;
  };

  world.primary.reserve(cfg.frame_count);
  world.assistant.reserve(cfg.frame_count);
  for (int i = 0; i < cfg.frame_count; ++i) {
    world.primary.push_back(make_frame(i, CameraId::Primary));
    world.assistant.push_back(make_frame(i, CameraId::Assistant));
  }

  // Landmarks live on the world surfaces so depth and feature geometry agree.
  std::mt19937_64 gen(cfg.seed);
  std::uniform_real_distribution<double> us(0.01, 0.99);
  std::uniform_real_distribution<double> ulat(-0.9, 0.9);
  std::uniform_real_distribution<double> uy(0.3, std::max(0.31, cfg.wall_height - 0.5));
  std::uniform_real_distribution<double> upick(0.0, 1.0);

  const bool walls = surf.has_plane_walls || surf.has_cylinder_walls;
  const long max_attempts = 200L * cfg.landmark_count;
  long attempts = 0;
  while (static_cast<int>(world.landmarks.size()) < cfg.landmark_count) {
    if (++attempts > max_attempts) {
      throw std::invalid_argument("generate_world: unsatisfiable config, landmarks not visible from >= 2 frames");
    }
    const double s = us(gen) * cfg.length;
    const PathState st = path.at(s);
    const Vec3 right = heading_right(st.heading);
    Vec3 candidate;
    const double pick = upick(gen);
    if (!walls || pick < 0.5) {
      candidate = Vec3(st.x, 0.0, st.z) + ulat(gen) * cfg.corridor_half_width * right;
    } else {
      const double side = pick < 0.75 ? 1.0 : -1.0;
      candidate = Vec3(st.x, uy(gen), st.z) + side * cfg.corridor_half_width * right;
    }
    int visible = 0;
    for (int i = 0; i < cfg.frame_count && visible < 2; ++i) {
      if (project_landmark(cfg, surf, world.primary[i].true_pose, candidate, nullptr)) ++visible;
      if (visible < 2 &&
          project_landmark(cfg, surf, world.assistant[i].true_pose, candidate, nullptr)) {
        ++visible;
      }
    }
    if (visible >= 2) world.landmarks.push_back(candidate);
  }

  auto fill_projections = [&](FrameObservation& obs) {
    for (size_t li = 0; li < world.landmarks.size(); ++li) {
      const Vec3& lm = world.landmarks[li];
      if ((lm - obs.true_pose.t).squaredNorm() > cfg.max_depth * cfg.max_depth) continue;
      Vec2 px;
      if (project_landmark(cfg, surf, obs.true_pose, lm, &px)) {
        obs.projections.push_back({static_cast<int>(li), px});
      }
    }
  };
  for (auto& f : world.primary) fill_projections(f);
  for (auto& f : world.assistant) fill_projections(f);

  return world;
}

std::vector<double> disparity_stream(const World& world) {
  std::vector<double> out(world.primary.size(), 0.0);
  for (size_t i = 1; i < world.primary.size(); ++i) {
    std::map<int, Vec2> prev;
    for (const auto& p : world.primary[i - 1].projections) prev[p.landmark_id] = p.pixel;
    double sum = 0.0;
    int count = 0;
    for (const auto& p : world.primary[i].projections) {
      auto it = prev.find(p.landmark_id);
      if (it == prev.end()) continue;
      sum += (p.pixel - it->second).norm();
      ++count;
    }
    out[i] = count > 0 ? sum / count : 0.0;
  }
  return out;
}

SubmapDistortionDraw draw_submap_distortion(const WorldConfig& world_cfg,
                                            const DistortionConfig& distortion,
                                            int submap_index) {
  std::seed_seq seq{world_cfg.seed, std::uint64_t{0xd15717},
                    static_cast<std::uint64_t>(submap_index)};
  std::mt19937_64 gen(seq);
  SubmapDistortionDraw draw;
  if (static_cast<size_t>(submap_index) < distortion.scale_multipliers.size()) {
    draw.scale_multiplier = distortion.scale_multipliers[submap_index];
  } else if (distortion.scale_sigma > 0.0) {
    std::normal_distribution<double> n(0.0, distortion.scale_sigma);
    draw.scale_multiplier = std::exp(n(gen));
  }
  draw.sx = distortion.intrinsic_sx;
  draw.sy = distortion.intrinsic_sy;
  if (distortion.intrinsic_jitter > 0.0) {
    std::normal_distribution<double> n(0.0, distortion.intrinsic_jitter);
    draw.sx *= std::exp(n(gen));
    draw.sy *= std::exp(n(gen));
  }
  return draw;
}

namespace {

// Inverse of the correction model: emits (R_est, t_est) such that the
// forward correction recovers the true step to first order in Delta.
Pose corrupt_step(const Pose& truth, const ScalingError& s) {
  Pose est;
  Mat3 s_inv = Mat3::Identity();
  s_inv(0, 0) = 1.0 / s.sx;
  s_inv(1, 1) = 1.0 / s.sy;
  est.t = s_inv * truth.t;
  if (est.t.norm() <= 1e-6) {
    est.R = truth.R;
    return est;
  }
  const Vec3 theta = rotation_error_vector(truth.R, est.t, s.deviation());
  est.R = rodrigues(theta) * truth.R;
  return est;
}

Grid warp_depth(const Grid& depth, const WorldConfig& cfg, double scale,
                double a, double b) {
  Grid out = depth;
  const double half_w = cfg.image_width / 2.0;
  const double half_h = cfg.image_height / 2.0;
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      const double rx = (x - cfg.intrinsics.cx) / half_w;
      const double ry = (y - cfg.intrinsics.cy) / half_h;
      const double r2 = rx * rx + ry * ry;
      out.at(x, y) *= scale * (1.0 + a * r2 + b * r2 * r2);
    }
  }
  return out;
}

}  // namespace

Submap synthesize_submap_output(const World& world, const SubmapRequest& request,
                                const DistortionConfig& distortion) {
  const auto& cfg = world.config;
  for (int f : request.primary_frames) {
    if (f < 0 || f >= static_cast<int>(world.primary.size())) {
      throw std::invalid_argument("synthesize_submap_output: unknown primary frame");
    }
  }
  for (int f : request.assistant_frames) {
    if (f < 0 || f >= static_cast<int>(world.assistant.size())) {
      throw std::invalid_argument("synthesize_submap_output: unknown assistant frame");
    }
  }
  if (request.primary_frames.empty()) {
    throw std::invalid_argument("synthesize_submap_output: empty frame set");
  }

  const SubmapDistortionDraw draw =
      draw_submap_distortion(cfg, distortion, request.index);
  const ScalingError scaling{draw.sx, draw.sy};

  Submap sub;
  sub.id = request.index;
  sub.k_est = Intrinsics{cfg.intrinsics.fx * draw.sx, cfg.intrinsics.fy * draw.sy,
                         cfg.intrinsics.cx * draw.sx, cfg.intrinsics.cy * draw.sy};
  sub.primary_frame_ids = request.primary_frames;
  sub.assistant_frame_ids = request.assistant_frames;

  const Pose first_inv =
      world.primary[request.primary_frames.front()].true_pose.inverse();

  // Ground-truth local poses, scaled by the sub-map multiplier.
  auto scaled_local = [&](const FrameObservation& obs) {
    Pose local = first_inv * obs.true_pose;
    local.t *= draw.scale_multiplier;
    return local;
  };

  // Primary chain: corrupt consecutive relative steps, then re-chain.
  std::vector<Pose> primary_est;
  primary_est.reserve(request.primary_frames.size());
  Pose prev_true;
  for (size_t i = 0; i < request.primary_frames.size(); ++i) {
    const Pose local = scaled_local(world.primary[request.primary_frames[i]]);
    if (i == 0) {
      primary_est.push_back(local);
    } else {
      const Pose step = prev_true.inverse() * local;
      primary_est.push_back(primary_est.back() * corrupt_step(step, scaling));
    }
    prev_true = local;
  }

  std::seed_seq noise_seq{cfg.seed, std::uint64_t{0xa015e},
                          static_cast<std::uint64_t>(request.index)};
  std::mt19937_64 noise_gen(noise_seq);
  std::normal_distribution<double> nrot(0.0, 1.0);
  auto apply_noise = [&](Pose p, bool first) {
    if (first || (distortion.pose_noise_rot <= 0.0 && distortion.pose_noise_trans <= 0.0)) {
      return p;
    }
    Vec6 xi;
    for (int k = 0; k < 3; ++k) xi(k) = nrot(noise_gen) * distortion.pose_noise_rot;
    for (int k = 3; k < 6; ++k) xi(k) = nrot(noise_gen) * distortion.pose_noise_trans;
    return p * se3_exp(xi);
  };

  for (size_t i = 0; i < request.primary_frames.size(); ++i) {
    const auto& obs = world.primary[request.primary_frames[i]];
    SubmapFrame f;
    f.frame_id = obs.frame_id;
    f.camera = CameraId::Primary;
    f.timestamp = obs.timestamp;
    f.local_pose = apply_noise(primary_est[i], i == 0);
    f.depth = warp_depth(obs.depth, cfg, draw.scale_multiplier,
                         distortion.warp_quadratic, distortion.warp_quartic);
    f.confidence = obs.confidence;
    sub.frames.push_back(std::move(f));
  }

  // Assistant frames are corrupted relative to their nearest primary
  // reference inside this window, mirroring the joint correction model.
  for (int af : request.assistant_frames) {
    const auto& obs = world.assistant[af];
    size_t ref = 0;
    double best = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < request.primary_frames.size(); ++i) {
      const double dist = std::abs(
          world.primary[request.primary_frames[i]].timestamp - obs.timestamp);
      if (dist < best) {
        best = dist;
        ref = i;
      }
    }
    const Pose ref_true = scaled_local(world.primary[request.primary_frames[ref]]);
    const Pose rel = ref_true.inverse() * scaled_local(obs);
    SubmapFrame f;
    f.frame_id = obs.frame_id;
    f.camera = CameraId::Assistant;
    f.timestamp = obs.timestamp;
    f.local_pose = apply_noise(primary_est[ref] * corrupt_step(rel, scaling), false);
    f.depth = warp_depth(obs.depth, cfg, draw.scale_multiplier,
                         distortion.warp_quadratic, distortion.warp_quartic);
    f.confidence = obs.confidence;
    sub.frames.push_back(std::move(f));
  }

  return sub;
}

std::vector<PixelMatch> synthesize_matches(const World& world, int frame_a,
                                           int frame_b, int min_count) {
  if (frame_a == frame_b) {
    throw std::invalid_argument("synthesize_matches: self pair is degenerate");
  }
  const auto& fa = world.primary.at(frame_a);
  const auto& fb = world.primary.at(frame_b);
  std::map<int, Vec2> in_a;
  for (const auto& p : fa.projections) in_a[p.landmark_id] = p.pixel;
  std::vector<PixelMatch> matches;
  for (const auto& p : fb.projections) {
    auto it = in_a.find(p.landmark_id);
    if (it != in_a.end()) matches.push_back({it->second, p.pixel});
  }
  if (static_cast<int>(matches.size()) < min_count) {
    throw std::runtime_error("synthesize_matches: insufficient co-visibility");
  }
  return matches;
}

std::optional<int> loop_oracle(const World& world, int current_frame,
                               double radius, int min_gap) {
  if (current_frame < 0 || current_frame >= static_cast<int>(world.primary.size())) {
    return std::nullopt;
  }
  const Vec3 pos = world.primary[current_frame].true_pose.t;
  for (int f = 0; f < current_frame - min_gap; ++f) {
    if ((world.primary[f].true_pose.t - pos).norm() <= radius) return f;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Scene file: little-endian binary, magic DUETWRLD, version 1.

namespace {

constexpr char kMagic[8] = {'D', 'U', 'E', 'T', 'W', 'R', 'L', 'D'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("scene file truncated");
  return v;
}

void put_pose(std::ostream& os, const Pose& p) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) put(os, p.R(r, c));
  for (int i = 0; i < 3; ++i) put(os, p.t(i));
}

Pose get_pose(std::istream& is) {
  Pose p;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.R(r, c) = get<double>(is);
  for (int i = 0; i < 3; ++i) p.t(i) = get<double>(is);
  return p;
}

void put_grid(std::ostream& os, const Grid& g) {
  put<std::int32_t>(os, g.width);
  put<std::int32_t>(os, g.height);
  os.write(reinterpret_cast<const char*>(g.data.data()),
           static_cast<std::streamsize>(g.data.size() * sizeof(double)));
}

Grid get_grid(std::istream& is) {
  const int w = get<std::int32_t>(is);
  const int h = get<std::int32_t>(is);
  Grid g(w, h);
  is.read(reinterpret_cast<char*>(g.data.data()),
          static_cast<std::streamsize>(g.data.size() * sizeof(double)));
  if (!is) throw std::runtime_error("scene file truncated");
  return g;
}

void put_frame(std::ostream& os, const FrameObservation& f) {
  put<std::int32_t>(os, f.frame_id);
  put<std::int32_t>(os, f.camera == CameraId::Primary ? 0 : 1);
  put(os, f.timestamp);
  put_pose(os, f.true_pose);
  put_grid(os, f.depth);
  put_grid(os, f.confidence);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(f.projections.size()));
  for (const auto& p : f.projections) {
    put<std::int32_t>(os, p.landmark_id);
    put(os, p.pixel.x());
    put(os, p.pixel.y());
  }
}

FrameObservation get_frame(std::istream& is) {
  FrameObservation f;
  f.frame_id = get<std::int32_t>(is);
  f.camera = get<std::int32_t>(is) == 0 ? CameraId::Primary : CameraId::Assistant;
  f.timestamp = get<double>(is);
  f.true_pose = get_pose(is);
  f.depth = get_grid(is);
  f.confidence = get_grid(is);
  const auto n = get<std::uint32_t>(is);
  f.projections.resize(n);
  for (auto& p : f.projections) {
    p.landmark_id = get<std::int32_t>(is);
    p.pixel.x() = get<double>(is);
    p.pixel.y() = get<double>(is);
  }
  return f;
}

}  // namespace

void World::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open scene file for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  put(os, kVersion);

  put<std::int32_t>(os, static_cast<std::int32_t>(config.trajectory));
  put(os, config.length);
  put<std::int32_t>(os, config.frame_count);
  put(os, config.frame_dt);
  put(os, config.rig_spacing);
  put_pose(os, config.rig_extrinsic);
  put(os, config.intrinsics.fx);
  put(os, config.intrinsics.fy);
  put(os, config.intrinsics.cx);
  put(os, config.intrinsics.cy);
  put<std::int32_t>(os, config.image_width);
  put<std::int32_t>(os, config.image_height);
  put<std::int32_t>(os, config.landmark_count);
  put(os, config.corridor_half_width);
  put(os, config.wall_height);
  put(os, config.camera_height);
  put(os, config.max_depth);
  put(os, config.arc_turn);
  put(os, config.height_amplitude);
  put(os, config.height_period);
  put(os, config.roll_amplitude);
  put(os, config.roll_period);
  put(os, config.assistant_time_offset);
  put(os, config.seed);

  put<std::uint32_t>(os, static_cast<std::uint32_t>(landmarks.size()));
  for (const auto& lm : landmarks) {
    put(os, lm.x());
    put(os, lm.y());
    put(os, lm.z());
  }
  put<std::uint32_t>(os, static_cast<std::uint32_t>(primary.size()));
  for (const auto& f : primary) put_frame(os, f);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(assistant.size()));
  for (const auto& f : assistant) put_frame(os, f);
}

World World::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open scene file: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a scene file: " + path);
  }
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) {
    throw std::runtime_error("unsupported scene file version");
  }

  World w;
  w.config.trajectory = static_cast<TrajectoryKind>(get<std::int32_t>(is));
  w.config.length = get<double>(is);
  w.config.frame_count = get<std::int32_t>(is);
  w.config.frame_dt = get<double>(is);
  w.config.rig_spacing = get<double>(is);
  w.config.rig_extrinsic = get_pose(is);
  w.config.intrinsics.fx = get<double>(is);
  w.config.intrinsics.fy = get<double>(is);
  w.config.intrinsics.cx = get<double>(is);
  w.config.intrinsics.cy = get<double>(is);
  w.config.image_width = get<std::int32_t>(is);
  w.config.image_height = get<std::int32_t>(is);
  w.config.landmark_count = get<std::int32_t>(is);
  w.config.corridor_half_width = get<double>(is);
  w.config.wall_height = get<double>(is);
  w.config.camera_height = get<double>(is);
  w.config.max_depth = get<double>(is);
  w.config.arc_turn = get<double>(is);
  w.config.height_amplitude = get<double>(is);
  w.config.height_period = get<double>(is);
  w.config.roll_amplitude = get<double>(is);
  w.config.roll_period = get<double>(is);
  w.config.assistant_time_offset = get<double>(is);
  w.config.seed = get<std::uint64_t>(is);

  const auto nl = get<std::uint32_t>(is);
  w.landmarks.resize(nl);
  for (auto& lm : w.landmarks) {
    lm.x() = get<double>(is);
    lm.y() = get<double>(is);
    lm.z() = get<double>(is);
  }
  const auto np = get<std::uint32_t>(is);
  w.primary.reserve(np);
  for (std::uint32_t i = 0; i < np; ++i) w.primary.push_back(get_frame(is));
  const auto na = get<std::uint32_t>(is);
  w.assistant.reserve(na);
  for (std::uint32_t i = 0; i < na; ++i) w.assistant.push_back(get_frame(is));
  return w;
}

}  // namespace duet::sim
