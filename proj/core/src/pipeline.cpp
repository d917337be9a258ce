#include "duet/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "duet/anchors.hpp"
#include "duet/intrinsic_search.hpp"
#include "duet/pgo.hpp"
#include "duet/pose_correction.hpp"
#include "duet/scale_alignment.hpp"
#include "duet/tps.hpp"
#include "duet/trajectory_io.hpp"

namespace duet {

namespace {

struct RawAssistantObs {
  double timestamp = 0.0;
  double reference_time = 0.0;
  Pose relative_to_reference;
  int submap = 0;
};

struct LoopEvent {
  int current_keyframe = 0;
  int historical_keyframe = 0;
  int submap = 0;
};

Pose interpolate_stamped(const std::vector<StampedPose>& traj, double time) {
  auto hi = std::lower_bound(
      traj.begin(), traj.end(), time,
      [](const StampedPose& p, double t) { return p.timestamp < t; });
  if (hi == traj.begin()) return traj.front().pose;
  if (hi == traj.end()) return traj.back().pose;
  const auto lo = hi - 1;
  const double span = hi->timestamp - lo->timestamp;
  const double alpha = span > 0.0 ? (time - lo->timestamp) / span : 0.0;
  return se3_interpolate(lo->pose, hi->pose, std::clamp(alpha, 0.0, 1.0));
}

Pose mean_pose(const std::vector<Pose>& poses) {
  if (poses.empty()) throw std::runtime_error("mean_pose: empty set");
  Vec3 t = Vec3::Zero();
  Vec3 log_sum = Vec3::Zero();
  const Mat3 base = poses.front().R;
  for (const auto& p : poses) {
    t += p.t;
    log_sum += rotation_log(base.transpose() * p.R);
  }
  const double n = static_cast<double>(poses.size());
  return Pose{base * rodrigues(log_sum / n), t / n};
}

class StageTimer {
 public:
  StageTimer(std::vector<StageTiming>& sink, const sim::World* world,
             const std::string& out_dir)
      : sink_(sink), world_(world), out_dir_(out_dir) {}

  template <typename F>
  void run(const char* name, F&& body) {
    const auto start = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const std::exception& e) {
      std::string note;
      if (world_ && !world_->primary.empty()) {
        const std::string path = out_dir_ + "/world.duet";
        try {
          world_->save(path);
          note = " (world replay: " + path + ")";
        } catch (...) {
        }
      }
      throw std::runtime_error(std::string("stage '") + name +
                               "' failed: " + e.what() + note);
    }
    const std::chrono::duration<double> elapsed =
        std::chrono::steady_clock::now() - start;
    sink_.push_back({name, elapsed.count()});
  }

 private:
  std::vector<StageTiming>& sink_;
  const sim::World* world_;
  std::string out_dir_;
};

}  // namespace

void write_metrics_csv(const std::string& path, const MetricReport& r) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open metrics file: " + path);
  os << "# ate_ratio_percent is ATE divided by trajectory length, times 100\n";
  os << "metric,value\n";
  char line[160];
  auto put = [&](const char* key, double v) {
    std::snprintf(line, sizeof(line), "%s,%.12g\n", key, v);
    os << line;
  };
  os << "alignment," << r.alignment_name << "\n";
  put("ate", r.ate);
  put("ate_ratio_percent", r.ate_ratio_percent);
  if (r.scale_valid) {
    put("scale_mean", r.scale_mean);
    put("scale_mean_abs_error", r.scale_mean_abs_error);
    put("scale_std", r.scale_std);
  }
  if (r.cloud_valid) {
    put("accuracy", r.accuracy);
    put("completeness", r.completeness);
    put("chamfer", r.chamfer);
  }
  put("keyframes", static_cast<double>(r.keyframe_count));
  put("submaps", static_cast<double>(r.submap_count));
  put("anchors", static_cast<double>(r.anchor_count));
  put("active_anchors", static_cast<double>(r.active_anchor_count));
  put("loops", static_cast<double>(r.loop_count));
  put("pgo_runs", static_cast<double>(r.pgo_runs));
  put("lambda", r.lambda_final);
  put("k_global_fx", r.k_global_final.fx);
  put("k_global_fy", r.k_global_final.fy);
}

PipelineResult run_pipeline(const RunConfig& cfg_in, const sim::World* prebuilt) {
  RunConfig cfg = cfg_in;
  cfg.world.seed = cfg.seed;
  cfg.anchors.seed = cfg.seed;
  cfg.anchors.adaptive_fusion = cfg.enable_adaptive_fusion;
  cfg.correction.rotation_enabled =
      cfg.enable_pose_correction && cfg.enable_rotation_correction;
  cfg.correction.translation_enabled =
      cfg.enable_pose_correction && cfg.enable_translation_correction;

  std::filesystem::create_directories(cfg.output_dir);

  PipelineResult result;
  sim::World world;
  StageTimer timer(result.report.timings, &world, cfg.output_dir);

  // -------------------------------------------------------------- simulate
  timer.run("simulate", [&] {
    if (prebuilt) {
      world = *prebuilt;
      return;
    }
    sim::WorldConfig wcfg = cfg.world;
    if (!cfg.pipeline.sync) {
      wcfg.assistant_time_offset = cfg.distortion.timestamp_offset != 0.0
                                       ? cfg.distortion.timestamp_offset
                                       : 0.5 * wcfg.frame_dt;
    }
    world = sim::generate_world(wcfg);
  });

  // Shared pipeline state.
  std::vector<Submap> submaps;
  std::vector<int> keyframes;                  // frame ids, chain order
  std::map<int, int> kf_index;                 // frame id -> chain index
  std::vector<OdometryStep> raw_steps;         // consecutive keyframe motions
  std::vector<int> step_submap;                // provider sub-map per step
  std::vector<Pose> corrected_steps;           // after lambda-damped correction
  std::vector<Pose> chain;                     // world poses per keyframe
  std::vector<RawAssistantObs> assistant_obs;
  std::vector<LoopEvent> loop_events;
  std::vector<CorrectedStep> correction_log;

  double reference_spacing = 0.0;
  std::optional<TestBank> bank;
  double lambda = 0.0;
  Pose t_ext_estimate;
  bool t_ext_known = false;
  size_t pgo_runs = 0;
  AnchorStore store(cfg.anchors);
  std::map<int, SubmapWorldInfo> world_info;
  FactorGraph last_graph;
  bool wrote_graph = false;

  auto local_pose_of = [&](const Submap& s, int frame_id) -> const Pose& {
    const SubmapFrame* f = s.find(frame_id, CameraId::Primary);
    if (!f) throw std::runtime_error("missing frame in sub-map");
    return f->local_pose;
  };

  auto rebuild_corrected_chain = [&] {
    corrected_steps.clear();
    correction_log.clear();
    const Intrinsics k_global = bank ? bank->k_global() : world.config.intrinsics;
    chain.assign(1, Pose::identity());
    for (size_t i = 0; i < raw_steps.size(); ++i) {
      OdometryStep step = raw_steps[i];
      const ScalingError damped =
          scaling_from_intrinsics(step.k_est, k_global).damped(lambda);
      CorrectedStep corr = correct_step(step.motion, damped, cfg.correction);
      corr.lambda = lambda;
      correction_log.push_back(corr);
      corrected_steps.push_back(corr.corrected);
      chain.push_back(chain.back() * corr.corrected);
    }
  };

  auto refresh_world_info = [&] {
    for (auto& s : submaps) {
      SubmapWorldInfo info;
      if (s.common_frame_ids.empty()) {
        const int first = s.primary_frame_ids.front();
        info.world_from_local =
            chain[kf_index.at(first)] * local_pose_of(s, first).inverse();
      } else {
        const int f = first_common_frame(s);
        info.world_from_local = align_submap_to_world(local_pose_of(s, f),
                                                      chain[kf_index.at(f)]);
      }
      s.world_from_local = info.world_from_local;
      const int center =
          s.primary_frame_ids[s.primary_frame_ids.size() / 2];
      info.center_optical_world =
          info.world_from_local.apply(local_pose_of(s, center).t);
      world_info[s.id] = info;
    }
  };

  auto run_pgo = [&] {
    FactorGraph graph;
    const int n = static_cast<int>(chain.size());
    // E_pri: dense odometry over the corrected measurements.
    for (int i = 1; i < n; ++i) {
      for (int k = 1; k <= std::min(cfg.odometry_window, i); ++k) {
        Pose meas = Pose::identity();
        for (int s = i - k; s < i; ++s) meas = meas * corrected_steps[s];
        graph.add_odometry_factor(i, i - k, meas, cfg.odometry_noise);
      }
    }
    // E_ast: consecutive coupled constraints from the backbone.
    for (int i = 1; i < n; ++i) {
      const Submap& s = submaps[step_submap[i - 1]];
      const double ti = world.primary[keyframes[i]].timestamp;
      const double tj = world.primary[keyframes[i - 1]].timestamp;
      std::vector<StampedPose> ast;
      for (const auto& f : s.frames) {
        if (f.camera == CameraId::Assistant) {
          ast.push_back({f.timestamp, f.local_pose});
        }
      }
      if (ast.size() < 2) continue;
      std::sort(ast.begin(), ast.end(), [](const auto& a, const auto& b) {
        return a.timestamp < b.timestamp;
      });
      if (ti < ast.front().timestamp - 1e-9 || ti > ast.back().timestamp + 1e-9 ||
          tj < ast.front().timestamp - 1e-9 || tj > ast.back().timestamp + 1e-9) {
        continue;
      }
      const Pose ai = interpolate_stamped(ast, ti);
      const Pose aj = interpolate_stamped(ast, tj);
      graph.add_assistant_factor(i, i - 1, aj.inverse() * ai, cfg.odometry_noise);
    }
    if (t_ext_known) graph.add_extrinsic_prior(t_ext_estimate, cfg.prior_noise);
    // E_loop.
    for (const auto& ev : loop_events) {
      const Submap& s = submaps[ev.submap];
      const Pose meas = local_pose_of(s, ev.historical_keyframe).inverse() *
                        local_pose_of(s, ev.current_keyframe);
      graph.add_loop_factor(kf_index.at(ev.current_keyframe),
                            kf_index.at(ev.historical_keyframe), meas,
                            cfg.loop_noise);
    }

    GraphValues initial;
    initial.poses = chain;
    initial.extrinsic = t_ext_known ? t_ext_estimate : Pose::identity();
    OptimizeOptions opts;
    opts.max_iterations = cfg.lm_max_iterations;
    opts.relative_cost_tol = cfg.lm_cost_tol;
    opts.lambda_init = cfg.lm_lambda_init;
    opts.loop_huber = cfg.loop_huber;
    const OptimizeResult opt = optimize(graph, initial, opts);
    chain = opt.values.poses;
    if (t_ext_known) t_ext_estimate = opt.values.extrinsic;
    last_graph = graph;
    wrote_graph = true;
    ++pgo_runs;
  };

  // -------------------------------------------------------------- submaps
  std::vector<std::vector<int>> batches;
  std::vector<AssistantStreamEntry> assistant_stream;
  timer.run("submaps", [&] {
    const auto disparities = sim::disparity_stream(world);
    batches = select_keyframes(disparities, cfg.pipeline);
    for (const auto& f : world.assistant) {
      assistant_stream.push_back({f.frame_id, f.timestamp});
    }
  });

  timer.run("pipeline", [&] {
    for (size_t batch_index = 0; batch_index < batches.size(); ++batch_index) {
      const auto& batch = batches[batch_index];
      const int k = static_cast<int>(batch_index);

      std::vector<double> times;
      for (int fid : batch) times.push_back(world.primary[fid].timestamp);
      const auto assistants =
          associate_assistant(times, assistant_stream, cfg.pipeline.sync);

      // Loop detection on the batch's last keyframe; the historical frame is
      // snapped to the nearest existing keyframe and appended to the window.
      std::vector<int> loop_frames;
      std::optional<LoopEvent> pending_loop;
      if (cfg.loop_enabled && !keyframes.empty()) {
        const auto hit = sim::loop_oracle(world, batch.back(), cfg.loop_radius,
                                          cfg.loop_min_gap);
        if (hit) {
          int nearest = keyframes.front();
          for (int kf : keyframes) {
            if (std::abs(kf - *hit) < std::abs(nearest - *hit)) nearest = kf;
          }
          const bool already_included =
              std::find(batch.begin(), batch.end(), nearest) != batch.end();
          if (!already_included) {
            loop_frames.push_back(nearest);
            pending_loop = LoopEvent{batch.back(), nearest, k};
          }
        }
      }

      const Submap* prev = submaps.empty() ? nullptr : &submaps.back();
      SubmapPlan plan = plan_submap(batch, assistants, prev,
                                    cfg.pipeline.n_overlap, loop_frames);

      sim::SubmapRequest request;
      request.index = k;
      request.primary_frames = plan.primary_frames;
      request.primary_frames.insert(request.primary_frames.end(),
                                    plan.loop_frames.begin(),
                                    plan.loop_frames.end());
      request.assistant_frames = plan.assistant_frames;
      Submap sub = sim::synthesize_submap_output(world, request, cfg.distortion);
      sub.primary_frame_ids = plan.primary_frames;  // loop frames kept separate
      sub.common_frame_ids = plan.common_frames;
      sub.loop_frame_ids = plan.loop_frames;
      if (!submaps.empty()) {
        submaps.back().common_next_frame_ids = plan.common_frames;
      }

      // Scale rectification from the constant-spacing prior.
      const SpacingEstimate spacing = estimate_spacing(sub, cfg.pipeline.sync);
      if (k == 0) {
        if (spacing.degenerate) {
          throw std::runtime_error("first sub-map has no primary-assistant pair");
        }
        reference_spacing = spacing.mean_spacing;
      }
      if (cfg.enable_scale_rectification) {
        const double prev_scale = submaps.empty() ? 1.0 : submaps.back().scale_factor;
        rectify_submap(sub, spacing, reference_spacing, prev_scale);
      }

      // Online intrinsic search.
      bool version_changed = false;
      if (!bank) {
        bank.emplace(cfg.bank, sub.k_est);
      } else {
        const int v = bank->version();
        bank->propose_candidate(sub.k_est);
        version_changed |= bank->version() != v;
      }
      if ((k + 1) % cfg.bank_interval == 0) {
        std::vector<std::pair<Mat3, int>> pairs;
        const auto& ids = sub.primary_frame_ids;
        for (size_t a = 0; a < ids.size() && pairs.size() < 64; ++a) {
          for (size_t b = a + 1; b < ids.size() && pairs.size() < 64; ++b) {
            try {
              const auto matches = sim::synthesize_matches(world, ids[a], ids[b], 8);
              if (static_cast<int>(matches.size()) <= cfg.bank.n_feature) continue;
              pairs.emplace_back(eight_point(matches),
                                 static_cast<int>(matches.size()));
            } catch (const std::exception&) {
              // pair unusable (insufficient co-visibility or degenerate)
            }
          }
        }
        const int v = bank->version();
        if (bank->try_add_group(pairs)) {
          lambda = bank->damping_factor();
          version_changed |= bank->version() != v;
        }
      }

      // Extrinsic estimate from the first sub-map's average relative pose.
      if (k == 0) {
        std::vector<Pose> rels;
        for (const auto& f : sub.frames) {
          if (f.camera != CameraId::Assistant) continue;
          const SubmapFrame* ref = nullptr;
          double best = std::numeric_limits<double>::infinity();
          for (const auto& p : sub.frames) {
            if (p.camera != CameraId::Primary) continue;
            const double d = std::abs(p.timestamp - f.timestamp);
            if (d < best) {
              best = d;
              ref = &p;
            }
          }
          if (ref) rels.push_back(ref->local_pose.inverse() * f.local_pose);
        }
        if (!rels.empty()) {
          t_ext_estimate = mean_pose(rels);
          t_ext_known = true;
        }
      }

      // Extend the raw odometry step list and the corrected chain.
      const Intrinsics k_global = bank->k_global();
      for (int fid : batch) {
        if (!keyframes.empty()) {
          const int prev_kf = keyframes.back();
          const Submap& provider =
              sub.find(prev_kf, CameraId::Primary) ? sub : submaps.back();
          const Pose motion = local_pose_of(provider, prev_kf).inverse() *
                              local_pose_of(provider, fid);
          raw_steps.push_back({motion, provider.k_est});
          step_submap.push_back(provider.id == sub.id ? k : provider.id);
          const ScalingError damped =
              scaling_from_intrinsics(provider.k_est, k_global).damped(lambda);
          CorrectedStep corr = correct_step(motion, damped, cfg.correction);
          corr.lambda = lambda;
          correction_log.push_back(corr);
          corrected_steps.push_back(corr.corrected);
          chain.push_back(chain.empty() ? corr.corrected
                                        : chain.back() * corr.corrected);
        } else {
          chain.push_back(Pose::identity());
        }
        kf_index[fid] = static_cast<int>(keyframes.size());
        keyframes.push_back(fid);
      }

      // Raw assistant observations for the front-end assistant chain.
      for (const auto& f : sub.frames) {
        if (f.camera != CameraId::Assistant) continue;
        const bool seen = std::any_of(
            assistant_obs.begin(), assistant_obs.end(),
            [&](const RawAssistantObs& o) { return o.timestamp == f.timestamp; });
        if (seen) continue;
        RawAssistantObs obs;
        obs.timestamp = f.timestamp;
        obs.submap = k;
        if (cfg.pipeline.sync) {
          const SubmapFrame* ref = nullptr;
          for (const auto& p : sub.frames) {
            if (p.camera == CameraId::Primary &&
                std::abs(p.timestamp - f.timestamp) <= 1e-9) {
              ref = &p;
              break;
            }
          }
          if (!ref) continue;
          obs.reference_time = ref->timestamp;
          obs.relative_to_reference = ref->local_pose.inverse() * f.local_pose;
        } else {
          std::vector<StampedPose> locals;
          for (const auto& p : sub.frames) {
            if (p.camera == CameraId::Primary) {
              locals.push_back({p.timestamp, p.local_pose});
            }
          }
          std::sort(locals.begin(), locals.end(), [](const auto& a, const auto& b) {
            return a.timestamp < b.timestamp;
          });
          if (f.timestamp < locals.front().timestamp ||
              f.timestamp > locals.back().timestamp) {
            continue;
          }
          obs.reference_time = f.timestamp;
          obs.relative_to_reference =
              interpolate_stamped(locals, f.timestamp).inverse() * f.local_pose;
        }
        assistant_obs.push_back(obs);
      }

      submaps.push_back(std::move(sub));
      Submap& stored = submaps.back();

      // Events: K_global updates re-rectify the whole chain; loops and
      // version bumps trigger the joint PGO.
      if (version_changed) rebuild_corrected_chain();
      if (pending_loop) loop_events.push_back(*pending_loop);
      if ((version_changed || pending_loop) && cfg.enable_optimization &&
          chain.size() >= 2) {
        run_pgo();
      }

      // Anchor bookkeeping for this sub-map.
      refresh_world_info();
      if (submaps.size() >= 2) {
        store.propagate_forward(submaps[submaps.size() - 2], stored);
      }
      for (int lf : stored.loop_frame_ids) {
        for (size_t h = 0; h + 1 < submaps.size(); ++h) {
          const auto& ids = submaps[h].primary_frame_ids;
          if (std::find(ids.begin(), ids.end(), lf) != ids.end()) {
            store.propagate_loop(stored, submaps[h], lf);
            break;
          }
        }
      }
      store.extract_and_densify(stored);
      store.propagate_backward(submaps, submaps.size() - 1);
      for (int lf : stored.loop_frame_ids) {
        for (size_t h = 0; h + 1 < submaps.size(); ++h) {
          const auto& ids = submaps[h].primary_frame_ids;
          if (std::find(ids.begin(), ids.end(), lf) != ids.end()) {
            store.propagate_loop(stored, submaps[h], lf);
            break;
          }
        }
      }
      store.fuse(world_info, stored.id);
    }
  });

  if (keyframes.empty()) {
    throw std::runtime_error("stage 'pipeline' failed: no keyframes selected");
  }

  // ------------------------------------------------------------------ map
  PointCloud est_cloud;
  PointCloud gt_cloud;
  timer.run("mapping", [&] {
    refresh_world_info();
    store.fuse(world_info);
    if (cfg.enable_local_suppression) {
      store.run_suppression();
    } else {
      store.set_all_active();
    }

    std::map<int, bool> exported;  // frame id -> already written
    for (const auto& s : submaps) {
      std::vector<Vec3> sources, targets;
      if (cfg.enable_nonlinear_align) {
        const Pose inv = s.world_from_local.inverse();
        for (const auto& a : store.anchors()) {
          if (a.state != AnchorState::Active || !a.fused) continue;
          const auto it = a.local_coords.find(s.id);
          if (it == a.local_coords.end()) continue;
          sources.push_back(it->second);
          targets.push_back(inv.apply(a.global));
        }
        // Trim control outliers: anchors whose local coordinate sits far
        // from the fused consensus (occlusion-seam ghosts) would drag the
        // deformation; the bulk defines the admissible residual scale.
        if (sources.size() > 4) {
          std::vector<double> res(sources.size());
          for (size_t i = 0; i < sources.size(); ++i) {
            res[i] = (sources[i] - targets[i]).norm();
          }
          std::vector<double> sorted = res;
          std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2,
                           sorted.end());
          const double gate = std::max(5.0 * sorted[sorted.size() / 2], 1e-8);
          std::vector<Vec3> kept_src, kept_dst;
          for (size_t i = 0; i < sources.size(); ++i) {
            if (res[i] <= gate) {
              kept_src.push_back(sources[i]);
              kept_dst.push_back(targets[i]);
            }
          }
          sources.swap(kept_src);
          targets.swap(kept_dst);
        }
        // The dense TPS solve is cubic in the control count; an evenly
        // strided subset keeps the smooth deformation well determined.
        const size_t cap = static_cast<size_t>(std::max(4, cfg.anchors.max_tps_controls));
        if (sources.size() > cap) {
          std::vector<Vec3> sub_src, sub_dst;
          const double step = static_cast<double>(sources.size()) / cap;
          for (size_t i = 0; i < cap; ++i) {
            const size_t idx = static_cast<size_t>(i * step);
            sub_src.push_back(sources[idx]);
            sub_dst.push_back(targets[idx]);
          }
          sources.swap(sub_src);
          targets.swap(sub_dst);
        }
      }
      TpsModel model;
      if (!sources.empty()) model = fit_tps(sources, targets, cfg.tps_lambda);

      std::vector<int> export_frames;
      int counter = 0;
      for (int fid : s.primary_frame_ids) {
        const bool is_bridge =
            std::find(s.common_frame_ids.begin(), s.common_frame_ids.end(), fid) !=
            s.common_frame_ids.end();
        if (is_bridge || exported.count(fid)) continue;
        exported[fid] = true;
        if (counter++ % cfg.cloud_frame_stride != 0) continue;
        export_frames.push_back(fid);
      }
      if (export_frames.empty()) continue;

      const PointCloud part =
          deform_submap(s, model, s.world_from_local, cfg.anchors.tau_conf,
                        export_frames);
      est_cloud.points.insert(est_cloud.points.end(), part.points.begin(),
                              part.points.end());
      est_cloud.confidence.insert(est_cloud.confidence.end(),
                                  part.confidence.begin(), part.confidence.end());

      for (int fid : export_frames) {
        const auto& obs = world.primary[fid];
        for (int y = 0; y < obs.depth.height; ++y) {
          for (int x = 0; x < obs.depth.width; ++x) {
            const double conf = obs.confidence.at(x, y);
            const double depth = obs.depth.at(x, y);
            if (conf <= cfg.anchors.tau_conf || depth <= 0.0) continue;
            gt_cloud.points.push_back(obs.true_pose.apply(
                world.config.intrinsics.back_project(Vec2(x, y), depth)));
            gt_cloud.confidence.push_back(conf);
          }
        }
      }
    }
  });

  // -------------------------------------------------------------- metrics
  timer.run("metrics", [&] {
    result.keyframe_ids = keyframes;
    for (size_t i = 0; i < keyframes.size(); ++i) {
      result.primary_trajectory.push_back(
          {world.primary[keyframes[i]].timestamp, chain[i]});
      result.gt_trajectory.push_back({world.primary[keyframes[i]].timestamp,
                                      world.primary[keyframes[i]].true_pose});
    }

    if (pgo_runs > 0 && t_ext_known) {
      for (size_t i = 0; i < keyframes.size(); ++i) {
        result.assistant_trajectory.push_back(
            {result.primary_trajectory[i].timestamp, chain[i] * t_ext_estimate});
      }
    } else {
      const Intrinsics k_global = bank->k_global();
      std::vector<AssistantObservation> obs;
      for (const auto& raw : assistant_obs) {
        if (raw.reference_time < result.primary_trajectory.front().timestamp ||
            raw.reference_time > result.primary_trajectory.back().timestamp) {
          continue;
        }
        AssistantObservation o;
        o.timestamp = raw.timestamp;
        o.reference_time = raw.reference_time;
        o.relative_to_reference = raw.relative_to_reference;
        o.primary_scaling =
            scaling_from_intrinsics(submaps[raw.submap].k_est, k_global);
        o.assistant_scaling = o.primary_scaling;
        obs.push_back(o);
      }
      result.assistant_trajectory = rectify_assistant_chain(
          result.primary_trajectory, obs, lambda, cfg.correction);
    }

    std::vector<Vec3> est_pos, gt_pos;
    for (size_t i = 0; i < keyframes.size(); ++i) {
      est_pos.push_back(result.primary_trajectory[i].pose.t);
      gt_pos.push_back(result.gt_trajectory[i].pose.t);
    }

    result.report.alignment_name =
        cfg.ate_alignment == Alignment::Sim3
            ? "sim3"
            : (cfg.ate_alignment == Alignment::Se3 ? "se3" : "none");
    result.report.ate = ate(est_pos, gt_pos, cfg.ate_alignment);
    double gt_length = 0.0;
    for (size_t i = 1; i < gt_pos.size(); ++i) {
      gt_length += (gt_pos[i] - gt_pos[i - 1]).norm();
    }
    result.report.ate_ratio_percent =
        gt_length > 0.0 ? 100.0 * result.report.ate / gt_length : 0.0;

    if (static_cast<int>(est_pos.size()) >= cfg.scale_window) {
      const auto drift = scale_drift_windows(est_pos, gt_pos, cfg.scale_window,
                                             cfg.scale_stride);
      result.report.scale_valid = true;
      result.report.scale_mean = drift.mean;
      result.report.scale_mean_abs_error = drift.mean_abs_error;
      result.report.scale_std = drift.stddev;
      result.scale_series = drift.normalized;
    }

    if (!est_cloud.points.empty() && !gt_cloud.points.empty()) {
      const AlignmentResult align = umeyama_alignment(
          est_pos, gt_pos, cfg.ate_alignment == Alignment::Sim3);
      std::vector<Vec3> est_aligned = est_cloud.points;
      if (cfg.ate_alignment != Alignment::None) {
        for (auto& p : est_aligned) p = align.apply(p);
      }
      const CloudMetrics cm = cloud_metrics(est_aligned, gt_cloud.points);
      result.report.cloud_valid = true;
      result.report.accuracy = cm.accuracy;
      result.report.completeness = cm.completeness;
      result.report.chamfer = cm.chamfer;
    }

    result.report.keyframe_count = keyframes.size();
    result.report.submap_count = submaps.size();
    result.report.anchor_count = store.anchors().size();
    result.report.active_anchor_count = static_cast<size_t>(
        std::count_if(store.anchors().begin(), store.anchors().end(),
                      [](const Anchor& a) {
                        return a.state == AnchorState::Active;
                      }));
    result.report.loop_count = loop_events.size();
    result.report.pgo_runs = pgo_runs;
    result.report.lambda_final = lambda;
    result.report.k_global_final = bank->k_global();
  });

  // --------------------------------------------------------------- export
  timer.run("export", [&] {
    const std::string dir = cfg.output_dir;
    write_tum(dir + "/est_primary.tum", result.primary_trajectory);
    write_tum(dir + "/est_assistant.tum", result.assistant_trajectory);
    write_tum(dir + "/gt_primary.tum", result.gt_trajectory);
    write_cloud(dir + "/map.xyz", est_cloud);
    write_cloud(dir + "/map_gt.xyz", gt_cloud);
    store.write_csv(dir + "/anchors.csv");
    bank->dump_csv(dir + "/bank.csv");
    write_correction_log(dir + "/correction_log.csv", correction_log);
    write_metrics_csv(dir + "/metrics.csv", result.report);
    if (wrote_graph) last_graph.write(dir + "/graph.txt");

    {
      std::ofstream os(dir + "/scale_drift.csv");
      os << "window,normalized_scale\n";
      char line[64];
      for (size_t i = 0; i < result.scale_series.size(); ++i) {
        std::snprintf(line, sizeof(line), "%zu,%.12g\n", i, result.scale_series[i]);
        os << line;
      }
    }
    {
      std::ofstream os(dir + "/intrinsics.csv");
      os << "submap,fx_est,fy_est,fx_global,fy_global,lambda\n";
      char line[160];
      for (const auto& s : submaps) {
        std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.9g,%.3g\n", s.id,
                      s.k_est.fx, s.k_est.fy, bank->k_global().fx,
                      bank->k_global().fy, lambda);
        os << line;
      }
    }
    {
      std::ofstream os(dir + "/timings.csv");
      os << "stage,seconds\n";
      char line[96];
      for (const auto& t : result.report.timings) {
        std::snprintf(line, sizeof(line), "%s,%.6f\n", t.stage.c_str(), t.seconds);
        os << line;
      }
    }
  });

  return result;
}

}  // namespace duet
