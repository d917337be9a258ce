#include "duet/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace duet {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

sim::TrajectoryKind parse_trajectory(const std::string& v) {
  if (v == "line") return sim::TrajectoryKind::Line;
  if (v == "arc") return sim::TrajectoryKind::Arc;
  if (v == "loop") return sim::TrajectoryKind::Loop;
  if (v == "random_walk") return sim::TrajectoryKind::RandomWalk;
  throw std::runtime_error("unknown trajectory kind: " + v);
}

const char* trajectory_name(sim::TrajectoryKind k) {
  switch (k) {
    case sim::TrajectoryKind::Line: return "line";
    case sim::TrajectoryKind::Arc: return "arc";
    case sim::TrajectoryKind::Loop: return "loop";
    case sim::TrajectoryKind::RandomWalk: return "random_walk";
  }
  return "arc";
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw std::runtime_error("not a boolean: " + v);
}

// One mutable binding per config key.
using Setter = std::function<void(RunConfig&, const std::string&)>;

std::map<std::string, Setter> make_registry() {
  std::map<std::string, Setter> reg;

  auto add_double = [&reg](const std::string& key, auto getter) {
    reg[key] = [getter](RunConfig& c, const std::string& v) {
      *getter(c) = std::stod(v);
    };
  };
  auto add_int = [&reg](const std::string& key, auto getter) {
    reg[key] = [getter](RunConfig& c, const std::string& v) {
      *getter(c) = std::stoi(v);
    };
  };
  auto add_bool = [&reg](const std::string& key, auto getter) {
    reg[key] = [getter](RunConfig& c, const std::string& v) {
      *getter(c) = parse_bool(v);
    };
  };

  // [world]
  reg["world.trajectory"] = [](RunConfig& c, const std::string& v) {
    c.world.trajectory = parse_trajectory(v);
  };
  add_double("world.length", [](RunConfig& c) { return &c.world.length; });
  add_int("world.frames", [](RunConfig& c) { return &c.world.frame_count; });
  add_double("world.frame_dt", [](RunConfig& c) { return &c.world.frame_dt; });
  add_double("world.spacing", [](RunConfig& c) { return &c.world.rig_spacing; });
  add_double("world.ext_x", [](RunConfig& c) { return &c.world.rig_extrinsic.t.x(); });
  add_double("world.ext_y", [](RunConfig& c) { return &c.world.rig_extrinsic.t.y(); });
  add_double("world.ext_z", [](RunConfig& c) { return &c.world.rig_extrinsic.t.z(); });
  add_double("world.fx", [](RunConfig& c) { return &c.world.intrinsics.fx; });
  add_double("world.fy", [](RunConfig& c) { return &c.world.intrinsics.fy; });
  add_double("world.cx", [](RunConfig& c) { return &c.world.intrinsics.cx; });
  add_double("world.cy", [](RunConfig& c) { return &c.world.intrinsics.cy; });
  add_int("world.image_width", [](RunConfig& c) { return &c.world.image_width; });
  add_int("world.image_height", [](RunConfig& c) { return &c.world.image_height; });
  add_int("world.landmarks", [](RunConfig& c) { return &c.world.landmark_count; });
  add_double("world.corridor_half_width",
             [](RunConfig& c) { return &c.world.corridor_half_width; });
  add_double("world.wall_height", [](RunConfig& c) { return &c.world.wall_height; });
  add_double("world.camera_height", [](RunConfig& c) { return &c.world.camera_height; });
  add_double("world.max_depth", [](RunConfig& c) { return &c.world.max_depth; });
  add_double("world.arc_turn", [](RunConfig& c) { return &c.world.arc_turn; });
  add_double("world.height_amplitude",
             [](RunConfig& c) { return &c.world.height_amplitude; });
  add_double("world.height_period", [](RunConfig& c) { return &c.world.height_period; });
  add_double("world.roll_amplitude",
             [](RunConfig& c) { return &c.world.roll_amplitude; });
  add_double("world.roll_period", [](RunConfig& c) { return &c.world.roll_period; });

  // [distortion]
  add_double("distortion.scale_sigma",
             [](RunConfig& c) { return &c.distortion.scale_sigma; });
  reg["distortion.scale_multipliers"] = [](RunConfig& c, const std::string& v) {
    c.distortion.scale_multipliers.clear();
    std::istringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!trim(tok).empty()) c.distortion.scale_multipliers.push_back(std::stod(tok));
    }
  };
  add_double("distortion.intrinsic_sx",
             [](RunConfig& c) { return &c.distortion.intrinsic_sx; });
  add_double("distortion.intrinsic_sy",
             [](RunConfig& c) { return &c.distortion.intrinsic_sy; });
  add_double("distortion.intrinsic_jitter",
             [](RunConfig& c) { return &c.distortion.intrinsic_jitter; });
  add_double("distortion.warp_quadratic",
             [](RunConfig& c) { return &c.distortion.warp_quadratic; });
  add_double("distortion.warp_quartic",
             [](RunConfig& c) { return &c.distortion.warp_quartic; });
  add_double("distortion.pose_noise_rot",
             [](RunConfig& c) { return &c.distortion.pose_noise_rot; });
  add_double("distortion.pose_noise_trans",
             [](RunConfig& c) { return &c.distortion.pose_noise_trans; });
  add_double("distortion.timestamp_offset",
             [](RunConfig& c) { return &c.distortion.timestamp_offset; });

  // [pipeline]
  add_double("pipeline.tau_flow", [](RunConfig& c) { return &c.pipeline.tau_flow; });
  add_int("pipeline.n_max", [](RunConfig& c) { return &c.pipeline.n_max; });
  add_int("pipeline.n_overlap", [](RunConfig& c) { return &c.pipeline.n_overlap; });
  add_bool("pipeline.sync", [](RunConfig& c) { return &c.pipeline.sync; });

  // [intrinsics]
  add_int("intrinsics.n_feature", [](RunConfig& c) { return &c.bank.n_feature; });
  add_int("intrinsics.n_pair", [](RunConfig& c) { return &c.bank.n_pair; });
  add_int("intrinsics.n_group", [](RunConfig& c) { return &c.bank.n_group; });
  add_int("intrinsics.bank_interval", [](RunConfig& c) { return &c.bank_interval; });

  // [pgo]
  add_int("pgo.window", [](RunConfig& c) { return &c.odometry_window; });
  add_double("pgo.odom_rot_sigma",
             [](RunConfig& c) { return &c.odometry_noise.rot_sigma; });
  add_double("pgo.odom_trans_sigma",
             [](RunConfig& c) { return &c.odometry_noise.trans_sigma; });
  add_double("pgo.loop_rot_sigma", [](RunConfig& c) { return &c.loop_noise.rot_sigma; });
  add_double("pgo.loop_trans_sigma",
             [](RunConfig& c) { return &c.loop_noise.trans_sigma; });
  reg["pgo.prior_sigma"] = [](RunConfig& c, const std::string& v) {
    const double s = std::stod(v);
    c.prior_noise = NoiseModel{s, s};
  };
  add_double("pgo.huber", [](RunConfig& c) { return &c.loop_huber; });
  add_double("pgo.lm_lambda_init", [](RunConfig& c) { return &c.lm_lambda_init; });
  add_int("pgo.lm_max_iterations", [](RunConfig& c) { return &c.lm_max_iterations; });
  add_double("pgo.lm_cost_tol", [](RunConfig& c) { return &c.lm_cost_tol; });

  // [loop]
  add_bool("loop.enabled", [](RunConfig& c) { return &c.loop_enabled; });
  add_double("loop.radius", [](RunConfig& c) { return &c.loop_radius; });
  add_int("loop.min_gap", [](RunConfig& c) { return &c.loop_min_gap; });

  // [correction]
  reg["correction.rotation_switch_deg"] = [](RunConfig& c, const std::string& v) {
    c.correction.rotation_switch = std::stod(v) * M_PI / 180.0;
  };
  add_double("correction.min_translation",
             [](RunConfig& c) { return &c.correction.min_translation; });

  // [anchors]
  add_int("anchors.n_grid", [](RunConfig& c) { return &c.anchors.n_grid; });
  add_double("anchors.eta_proj", [](RunConfig& c) { return &c.anchors.eta_proj; });
  add_double("anchors.tau_conf", [](RunConfig& c) { return &c.anchors.tau_conf; });
  add_double("anchors.suppression_radius",
             [](RunConfig& c) { return &c.anchors.suppression_radius; });
  add_double("anchors.weight_floor",
             [](RunConfig& c) { return &c.anchors.weight_floor; });
  add_int("anchors.backward_cap",
          [](RunConfig& c) { return &c.anchors.backward_depth_cap; });
  add_int("anchors.max_tps_controls",
          [](RunConfig& c) { return &c.anchors.max_tps_controls; });
  add_double("anchors.tps_lambda", [](RunConfig& c) { return &c.tps_lambda; });

  // [eval]
  reg["eval.ate_alignment"] = [](RunConfig& c, const std::string& v) {
    if (v == "se3") {
      c.ate_alignment = Alignment::Se3;
    } else if (v == "sim3") {
      c.ate_alignment = Alignment::Sim3;
    } else if (v == "none") {
      c.ate_alignment = Alignment::None;
    } else {
      throw std::runtime_error("unknown alignment: " + v);
    }
  };
  add_int("eval.scale_window", [](RunConfig& c) { return &c.scale_window; });
  add_int("eval.scale_stride", [](RunConfig& c) { return &c.scale_stride; });
  add_int("eval.cloud_frame_stride",
          [](RunConfig& c) { return &c.cloud_frame_stride; });

  // [run]
  reg["run.seed"] = [](RunConfig& c, const std::string& v) {
    c.seed = std::stoull(v);
  };
  reg["run.output_dir"] = [](RunConfig& c, const std::string& v) {
    c.output_dir = v;
  };

  // [ablate]
  add_bool("ablate.optimization", [](RunConfig& c) { return &c.enable_optimization; });
  add_bool("ablate.pose_correction",
           [](RunConfig& c) { return &c.enable_pose_correction; });
  add_bool("ablate.rotation_correction",
           [](RunConfig& c) { return &c.enable_rotation_correction; });
  add_bool("ablate.translation_correction",
           [](RunConfig& c) { return &c.enable_translation_correction; });
  add_bool("ablate.scale_rectification",
           [](RunConfig& c) { return &c.enable_scale_rectification; });
  add_bool("ablate.local_suppression",
           [](RunConfig& c) { return &c.enable_local_suppression; });
  add_bool("ablate.adaptive_fusion",
           [](RunConfig& c) { return &c.enable_adaptive_fusion; });
  add_bool("ablate.nonlinear_align",
           [](RunConfig& c) { return &c.enable_nonlinear_align; });

  return reg;
}

const std::map<std::string, Setter>& registry() {
  static const std::map<std::string, Setter> reg = make_registry();
  return reg;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::string section;
  int line_number = 0;
  while (std::getline(is, line)) {
    ++line_number;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config line " + std::to_string(line_number) +
                               ": expected key = value");
    }
    const std::string key = section + "." + trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = registry().find(key);
    if (it == registry().end()) {
      throw std::runtime_error("config line " + std::to_string(line_number) +
                               ": unknown key '" + key + "'");
    }
    try {
      it->second(cfg, value);
    } catch (const std::exception& e) {
      throw std::runtime_error("config line " + std::to_string(line_number) +
                               " (" + key + "): " + e.what());
    }
  }
  // The run seed drives every stochastic component.
  cfg.world.seed = cfg.seed;
  cfg.anchors.seed = cfg.seed;
  cfg.anchors.adaptive_fusion = cfg.enable_adaptive_fusion;
  cfg.correction.rotation_enabled =
      cfg.enable_pose_correction && cfg.enable_rotation_correction;
  cfg.correction.translation_enabled =
      cfg.enable_pose_correction && cfg.enable_translation_correction;
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_to_text(const RunConfig& c) {
  std::ostringstream os;
  char buf[256];
  auto kv = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g\n", key, v);
    os << buf;
  };
  auto kvi = [&](const char* key, long long v) { os << key << " = " << v << "\n"; };
  auto kvb = [&](const char* key, bool v) {
    os << key << " = " << (v ? "true" : "false") << "\n";
  };

  os << "[world]\n";
  os << "trajectory = " << trajectory_name(c.world.trajectory) << "\n";
  kv("length", c.world.length);
  kvi("frames", c.world.frame_count);
  kv("frame_dt", c.world.frame_dt);
  kv("spacing", c.world.rig_spacing);
  kv("ext_x", c.world.rig_extrinsic.t.x());
  kv("ext_y", c.world.rig_extrinsic.t.y());
  kv("ext_z", c.world.rig_extrinsic.t.z());
  kv("fx", c.world.intrinsics.fx);
  kv("fy", c.world.intrinsics.fy);
  kv("cx", c.world.intrinsics.cx);
  kv("cy", c.world.intrinsics.cy);
  kvi("image_width", c.world.image_width);
  kvi("image_height", c.world.image_height);
  kvi("landmarks", c.world.landmark_count);
  kv("corridor_half_width", c.world.corridor_half_width);
  kv("wall_height", c.world.wall_height);
  kv("camera_height", c.world.camera_height);
  kv("max_depth", c.world.max_depth);
  kv("arc_turn", c.world.arc_turn);
  kv("height_amplitude", c.world.height_amplitude);
  kv("height_period", c.world.height_period);
  kv("roll_amplitude", c.world.roll_amplitude);
  kv("roll_period", c.world.roll_period);

  os << "\n[distortion]\n";
  kv("scale_sigma", c.distortion.scale_sigma);
  if (!c.distortion.scale_multipliers.empty()) {
    os << "scale_multipliers = ";
    for (size_t i = 0; i < c.distortion.scale_multipliers.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%s%.17g", i ? "," : "",
                    c.distortion.scale_multipliers[i]);
      os << buf;
    }
    os << "\n";
  }
  kv("intrinsic_sx", c.distortion.intrinsic_sx);
  kv("intrinsic_sy", c.distortion.intrinsic_sy);
  kv("intrinsic_jitter", c.distortion.intrinsic_jitter);
  kv("warp_quadratic", c.distortion.warp_quadratic);
  kv("warp_quartic", c.distortion.warp_quartic);
  kv("pose_noise_rot", c.distortion.pose_noise_rot);
  kv("pose_noise_trans", c.distortion.pose_noise_trans);
  kv("timestamp_offset", c.distortion.timestamp_offset);

  os << "\n[pipeline]\n";
  kv("tau_flow", c.pipeline.tau_flow);
  kvi("n_max", c.pipeline.n_max);
  kvi("n_overlap", c.pipeline.n_overlap);
  kvb("sync", c.pipeline.sync);

  os << "\n[intrinsics]\n";
  kvi("n_feature", c.bank.n_feature);
  kvi("n_pair", c.bank.n_pair);
  kvi("n_group", c.bank.n_group);
  kvi("bank_interval", c.bank_interval);

  os << "\n[pgo]\n";
  kvi("window", c.odometry_window);
  kv("odom_rot_sigma", c.odometry_noise.rot_sigma);
  kv("odom_trans_sigma", c.odometry_noise.trans_sigma);
  kv("loop_rot_sigma", c.loop_noise.rot_sigma);
  kv("loop_trans_sigma", c.loop_noise.trans_sigma);
  kv("prior_sigma", c.prior_noise.rot_sigma);
  kv("huber", c.loop_huber);
  kv("lm_lambda_init", c.lm_lambda_init);
  kvi("lm_max_iterations", c.lm_max_iterations);
  kv("lm_cost_tol", c.lm_cost_tol);

  os << "\n[loop]\n";
  kvb("enabled", c.loop_enabled);
  kv("radius", c.loop_radius);
  kvi("min_gap", c.loop_min_gap);

  os << "\n[correction]\n";
  kv("rotation_switch_deg", c.correction.rotation_switch * 180.0 / M_PI);
  kv("min_translation", c.correction.min_translation);

  os << "\n[anchors]\n";
  kvi("n_grid", c.anchors.n_grid);
  kv("eta_proj", c.anchors.eta_proj);
  kv("tau_conf", c.anchors.tau_conf);
  kv("suppression_radius", c.anchors.suppression_radius);
  kv("weight_floor", c.anchors.weight_floor);
  kvi("backward_cap", c.anchors.backward_depth_cap);
  kvi("max_tps_controls", c.anchors.max_tps_controls);
  kv("tps_lambda", c.tps_lambda);

  os << "\n[eval]\n";
  os << "ate_alignment = "
     << (c.ate_alignment == Alignment::Sim3
             ? "sim3"
             : (c.ate_alignment == Alignment::Se3 ? "se3" : "none"))
     << "\n";
  kvi("scale_window", c.scale_window);
  kvi("scale_stride", c.scale_stride);
  kvi("cloud_frame_stride", c.cloud_frame_stride);

  os << "\n[run]\n";
  kvi("seed", static_cast<long long>(c.seed));
  os << "output_dir = " << c.output_dir << "\n";

  os << "\n[ablate]\n";
  kvb("optimization", c.enable_optimization);
  kvb("pose_correction", c.enable_pose_correction);
  kvb("rotation_correction", c.enable_rotation_correction);
  kvb("translation_correction", c.enable_translation_correction);
  kvb("scale_rectification", c.enable_scale_rectification);
  kvb("local_suppression", c.enable_local_suppression);
  kvb("adaptive_fusion", c.enable_adaptive_fusion);
  kvb("nonlinear_align", c.enable_nonlinear_align);
  return os.str();
}

void write_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open config file for writing: " + path);
  os << config_to_text(cfg);
}

void apply_ablation(RunConfig& cfg, const std::string& name) {
  if (name == "optimization") {
    cfg.enable_optimization = false;
  } else if (name == "pose-correction") {
    cfg.enable_pose_correction = false;
    cfg.correction.rotation_enabled = false;
    cfg.correction.translation_enabled = false;
  } else if (name == "rotation-correction") {
    cfg.enable_rotation_correction = false;
    cfg.correction.rotation_enabled = false;
  } else if (name == "translation-correction") {
    cfg.enable_translation_correction = false;
    cfg.correction.translation_enabled = false;
  } else if (name == "scale-rectification") {
    cfg.enable_scale_rectification = false;
  } else if (name == "local-suppression") {
    cfg.enable_local_suppression = false;
  } else if (name == "adaptive-fusion") {
    cfg.enable_adaptive_fusion = false;
    cfg.anchors.adaptive_fusion = false;
  } else if (name == "nonlinear-align") {
    cfg.enable_nonlinear_align = false;
  } else {
    throw std::runtime_error("unknown ablation: " + name);
  }
}

}  // namespace duet
