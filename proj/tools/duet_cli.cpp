#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "duet/config.hpp"
#include "duet/metrics.hpp"
#include "duet/pipeline.hpp"
#include "duet/tps.hpp"
#include "duet/trajectory_io.hpp"

namespace {

duet::RunConfig load_config(const std::string& path, std::uint64_t seed_override,
                            bool have_seed, const std::string& out_override,
                            int sync_mode) {
  duet::RunConfig cfg =
      path.empty() ? duet::parse_config_text("") : duet::parse_config_file(path);
  if (have_seed) {
    cfg.seed = seed_override;
    cfg.world.seed = seed_override;
    cfg.anchors.seed = seed_override;
  }
  if (!out_override.empty()) cfg.output_dir = out_override;
  if (sync_mode == 1) cfg.pipeline.sync = true;
  if (sync_mode == 2) cfg.pipeline.sync = false;
  return cfg;
}

void print_report(const duet::MetricReport& r) {
  std::printf("keyframes          %zu\n", r.keyframe_count);
  std::printf("submaps            %zu\n", r.submap_count);
  std::printf("anchors            %zu (%zu active)\n", r.anchor_count,
              r.active_anchor_count);
  std::printf("loops / pgo runs   %zu / %zu\n", r.loop_count, r.pgo_runs);
  std::printf("ate (%s)         %.6g\n", r.alignment_name.c_str(), r.ate);
  std::printf("ate ratio          %.4g %%\n", r.ate_ratio_percent);
  if (r.scale_valid) {
    std::printf("scale mean/std     %.6g / %.6g\n", r.scale_mean, r.scale_std);
  }
  if (r.cloud_valid) {
    std::printf("accuracy           %.6g\n", r.accuracy);
    std::printf("completeness       %.6g\n", r.completeness);
    std::printf("chamfer            %.6g\n", r.chamfer);
  }
  std::printf("lambda             %.2g\n", r.lambda_final);
  std::printf("K_global fx/fy     %.6g / %.6g\n", r.k_global_final.fx,
              r.k_global_final.fy);
  for (const auto& t : r.timings) {
    std::printf("stage %-12s %.3f s\n", t.stage.c_str(), t.seconds);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"duet: dual-camera scale-consistent SLAM back-end on a synthetic backbone"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string world_path;
  std::uint64_t seed = 0;
  bool have_seed = false;
  int sync_mode = 0;  // 0 = config, 1 = sync, 2 = async

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "configuration file");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "rng seed override")
        ->each([&](const std::string&) { have_seed = true; });
    cmd->add_flag_callback("--sync", [&] { sync_mode = 1; },
                           "force synchronous assistant association");
    cmd->add_flag_callback("--async", [&] { sync_mode = 2; },
                           "force asynchronous assistant association");
  };

  // simulate: generate and store a world.
  auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic world and save it");
  add_common(sim_cmd);

  // run: full pipeline.
  auto* run_cmd = app.add_subcommand("run", "run the full pipeline");
  add_common(run_cmd);
  std::string ablate_name;
  run_cmd->add_option("--ablate", ablate_name,
                      "disable one module: optimization, pose-correction, "
                      "rotation-correction, translation-correction, "
                      "scale-rectification, local-suppression, adaptive-fusion, "
                      "nonlinear-align");
  run_cmd->add_option("--world", world_path, "replay a stored scene file");

  // eval: metrics over stored artifacts.
  auto* eval_cmd = app.add_subcommand("eval", "evaluate stored trajectories and clouds");
  std::string est_path, gt_path, est_cloud_path, gt_cloud_path, alignment = "sim3";
  int window = 100, stride = 5;
  eval_cmd->add_option("--est", est_path, "estimated trajectory (TUM)")->required();
  eval_cmd->add_option("--gt", gt_path, "ground-truth trajectory (TUM)")->required();
  eval_cmd->add_option("--alignment", alignment, "sim3 | se3 | none");
  eval_cmd->add_option("--est-cloud", est_cloud_path, "estimated point cloud");
  eval_cmd->add_option("--gt-cloud", gt_cloud_path, "ground-truth point cloud");
  eval_cmd->add_option("--window", window, "scale-drift window (poses)");
  eval_cmd->add_option("--stride", stride, "scale-drift stride (poses)");

  // ablate: full model vs one disabled module.
  auto* ablate_cmd =
      app.add_subcommand("ablate", "compare the full model against one ablation");
  add_common(ablate_cmd);
  std::string ablate_which;
  ablate_cmd->add_option("--name", ablate_which, "module to disable")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim_cmd->parsed()) {
      duet::RunConfig cfg = load_config(config_path, seed, have_seed, out_dir, sync_mode);
      std::filesystem::create_directories(cfg.output_dir);
      duet::sim::WorldConfig wcfg = cfg.world;
      if (!cfg.pipeline.sync) {
        wcfg.assistant_time_offset = cfg.distortion.timestamp_offset != 0.0
                                         ? cfg.distortion.timestamp_offset
                                         : 0.5 * wcfg.frame_dt;
      }
      const duet::sim::World world = duet::sim::generate_world(wcfg);
      const std::string path = cfg.output_dir + "/world.duet";
      world.save(path);
      duet::write_config(cfg.output_dir + "/config.cfg", cfg);
      std::printf("world: %d frames, %zu landmarks -> %s\n", wcfg.frame_count,
                  world.landmarks.size(), path.c_str());
      return 0;
    }

    if (run_cmd->parsed()) {
      duet::RunConfig cfg = load_config(config_path, seed, have_seed, out_dir, sync_mode);
      if (!ablate_name.empty()) duet::apply_ablation(cfg, ablate_name);
      duet::PipelineResult result;
      if (!world_path.empty()) {
        const duet::sim::World world = duet::sim::World::load(world_path);
        result = duet::run_pipeline(cfg, &world);
      } else {
        result = duet::run_pipeline(cfg);
      }
      print_report(result.report);
      std::printf("artifacts in %s\n", cfg.output_dir.c_str());
      return 0;
    }

    if (eval_cmd->parsed()) {
      const auto est = duet::read_tum(est_path);
      const auto gt = duet::read_tum(gt_path);
      if (est.size() != gt.size()) {
        std::fprintf(stderr, "error: trajectory sizes differ (%zu vs %zu)\n",
                     est.size(), gt.size());
        return 1;
      }
      duet::Alignment align = duet::Alignment::Sim3;
      if (alignment == "se3") align = duet::Alignment::Se3;
      if (alignment == "none") align = duet::Alignment::None;
      std::vector<duet::Vec3> est_pos, gt_pos;
      for (size_t i = 0; i < est.size(); ++i) {
        est_pos.push_back(est[i].pose.t);
        gt_pos.push_back(gt[i].pose.t);
      }
      std::printf("ate (%s): %.9g\n", alignment.c_str(),
                  duet::ate(est_pos, gt_pos, align));
      if (static_cast<int>(est_pos.size()) >= window) {
        const auto drift = duet::scale_drift_windows(est_pos, gt_pos, window, stride);
        std::printf("scale mean %.9g  mean_abs_err %.9g  std %.9g\n", drift.mean,
                    drift.mean_abs_error, drift.stddev);
      }
      if (!est_cloud_path.empty() && !gt_cloud_path.empty()) {
        const auto ec = duet::read_cloud(est_cloud_path);
        const auto gc = duet::read_cloud(gt_cloud_path);
        const auto cm = duet::cloud_metrics(ec.points, gc.points);
        std::printf("accuracy %.9g  completeness %.9g  chamfer %.9g\n",
                    cm.accuracy, cm.completeness, cm.chamfer);
      }
      return 0;
    }

    if (ablate_cmd->parsed()) {
      duet::RunConfig full = load_config(config_path, seed, have_seed, out_dir, sync_mode);
      duet::RunConfig cut = full;
      duet::apply_ablation(cut, ablate_which);
      full.output_dir += "/full";
      cut.output_dir += "/wo_" + ablate_which;
      std::printf("== full model ==\n");
      const auto a = duet::run_pipeline(full);
      print_report(a.report);
      std::printf("\n== w/o %s ==\n", ablate_which.c_str());
      const auto b = duet::run_pipeline(cut);
      print_report(b.report);
      std::printf("\nate %.6g -> %.6g   chamfer %.6g -> %.6g\n", a.report.ate,
                  b.report.ate, a.report.chamfer, b.report.chamfer);
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
