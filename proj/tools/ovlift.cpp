// Command-line front end: run the lifting pipeline, score predictions,
// generate synthetic benchmark scenes, and export instance-colored clouds.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration / usage error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "ovlift/ovlift.hpp"

namespace {

// One flag per config key, same spelling as the file format. Only flags the
// user actually passed are collected, so precedence stays flag > file >
// default.
class ConfigFlags {
public:
  // io_keys=false leaves out scene/output/backend/seed/workers/debug for
  // verbs that control those themselves (synth's recording run).
  void attach(CLI::App* cmd, bool io_keys) {
    auto opt = [&](const std::string& key, const std::string& desc) {
      auto holder = std::make_shared<std::string>();
      held_.emplace_back(key, holder);
      cmd->add_option("--" + key, *holder, desc);
    };
    if (io_keys) {
      opt("scene", "scene directory");
      opt("output", "output directory");
      opt("backend.fixture", "directory of recorded model outputs");
      opt("backend.subprocess", "shell command for a line-JSON model server");
      opt("backend.pool", "subprocess pool size (default 1)");
    }
    opt("n_prompts", "superpoints promoted to 3D prompts (default 200)");
    opt("frame_stride", "keep every k-th frame (default 10)");
    opt("t_views", "ranked views per prompt (default 5)");
    opt("theta", "overlap-ratio threshold (default 0.3)");
    opt("tau", "merge threshold scale (default 0.45)");
    opt("column_norm", "l1 | l2 | nonzero (default l1)");
    opt("label_strategy", "score | number (default score)");
    opt("k_pixel_prompts", "pixel prompts sent per view (default 5)");
    opt("eps_depth", "visibility depth tolerance, meters (default 0.05)");
    opt("superpoint.k_nn", "neighbors for normals and graph (default 10)");
    opt("superpoint.k_fh", "segmentation scale (default 0.05)");
    opt("superpoint.min_size", "minimum superpoint size (default 50)");
    opt("blocklist", "non-instance tag blocklist file");
    opt("gt_min_points", "min points for a box-derived GT instance (default 20)");
    if (io_keys) {
      opt("seed", "run seed, echoed into the summary");
      opt("workers", "worker threads (default 1; env OVLIFT_WORKERS wins)");
      debug_ = cmd->add_flag("--debug", "also write intermediate artifacts");
    }
  }

  std::map<std::string, std::string> given(const CLI::App* cmd) const {
    std::map<std::string, std::string> entries;
    for (const auto& [key, holder] : held_)
      if (cmd->count("--" + key) > 0) entries[key] = *holder;
    if (debug_ != nullptr && debug_->count() > 0) entries["debug"] = "true";
    return entries;
  }

private:
  std::vector<std::pair<std::string, std::shared_ptr<std::string>>> held_;
  CLI::Option* debug_ = nullptr;
};

ovlift::PipelineConfig resolve_config(const std::string& config_path,
                                      const std::map<std::string, std::string>& flag_entries) {
  ovlift::PipelineConfig cfg;
  if (!config_path.empty())
    ovlift::apply_config_entries(cfg, ovlift::load_config_file(config_path));
  ovlift::apply_config_entries(cfg, flag_entries);
  ovlift::validate_config(cfg);
  return cfg;
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
}

// A run that died mid-way leaves a FAILED marker so downstream consumers
// never mistake a partial directory for a finished one.
void flag_failed_run(const std::string& output_dir, const std::string& message) {
  if (output_dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(output_dir, ec);
  if (ec) return;
  std::ofstream f(std::filesystem::path(output_dir) / "FAILED");
  f << message << "\n";
}

int cmd_run(const std::string& config_path, const std::map<std::string, std::string>& flags) {
  ovlift::PipelineConfig cfg = resolve_config(config_path, flags);
  try {
    ovlift::PipelineOutput out = ovlift::run_pipeline(cfg);
    print_warnings(out.summary.warnings);
    std::cout << "points " << out.summary.n_points << ", frames " << out.summary.n_frames_sampled
              << "/" << out.summary.n_frames_total << ", superpoints "
              << out.summary.n_superpoints << ", prompts " << out.summary.n_prompts << "\n"
              << "coarse masks " << out.summary.n_coarse_masks << ", instances "
              << out.summary.n_instances << " (" << out.summary.n_labeled_instances
              << " labeled), merge passes " << out.summary.merge_passes << "\n"
              << "outputs: " << cfg.output_dir << "\n";
    return 0;
  } catch (const std::exception& e) {
    flag_failed_run(cfg.output_dir, e.what());
    throw;
  }
}

int cmd_eval(const std::string& pred_dir, const std::string& scene_dir, int gt_min_points) {
  ovlift::Scene scene = ovlift::load_scene(scene_dir);
  ovlift::GroundTruth gt =
      ovlift::load_scene_ground_truth(scene_dir, scene.points, gt_min_points);
  std::vector<ovlift::GtInstanceRecord> gts = ovlift::gt_records_from_ground_truth(gt);
  std::vector<std::string> warnings;
  ovlift::MetricsReport report = ovlift::run_eval(pred_dir, gts, gt.category_group, &warnings);
  print_warnings(warnings);
  std::cout << ovlift::format_metrics_text(report);
  std::cout << "metrics: " << (std::filesystem::path(pred_dir) / "metrics.json").string() << "\n";
  return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir, uint64_t seed,
              const std::string& fixture_dir,
              const std::map<std::string, std::string>& flags) {
  ovlift::SceneSpec spec = ovlift::read_scene_spec(spec_path);
  ovlift::GeneratedScene gen = ovlift::generate_scene(spec, seed);
  ovlift::save_scene(gen.scene, out_dir);
  ovlift::write_ground_truth(out_dir, gen.gt);
  std::cout << "scene: " << gen.scene.points.size() << " points, " << gen.scene.frames.size()
            << " frames, " << gen.gt.labels.size() << " instances -> " << out_dir << "\n";

  if (!fixture_dir.empty()) {
    // Replay the pipeline against the scene's own ground truth and record
    // every backend answer. Recording runs single-threaded so the fixture
    // contents never depend on scheduling.
    ovlift::PipelineConfig cfg;
    ovlift::apply_config_entries(cfg, flags);
    cfg.scene_dir = out_dir;
    cfg.seed = seed;
    cfg.workers = 1;
    ovlift::validate_config(cfg);
    auto oracle = std::make_shared<ovlift::OracleBackend>(gen.scene, gen.gt, spec, seed);
    ovlift::FixtureRecorder recorder(oracle, fixture_dir);
    ovlift::PipelineOutput out = ovlift::run_pipeline(cfg, gen.scene, recorder);
    recorder.finalize();
    print_warnings(out.summary.warnings);
    std::cout << "fixtures: " << out.summary.n_segmented_views << " masks, "
              << out.summary.n_tags << " tags -> " << fixture_dir << "\n"
              << "replay with the same pipeline parameters to reuse them\n";
  }
  return 0;
}

int cmd_export_ply(const std::string& scene_dir, const std::string& pred_dir,
                   const std::string& out_path) {
  ovlift::Scene scene = ovlift::load_scene(scene_dir);
  std::vector<std::string> warnings;
  std::vector<ovlift::PredictionRecord> preds = ovlift::read_predictions(pred_dir, &warnings);
  print_warnings(warnings);
  std::vector<ovlift::Instance> instances;
  for (size_t i = 0; i < preds.size(); ++i) {
    ovlift::Instance inst;
    inst.id = static_cast<int>(i);
    inst.point_indices = preds[i].point_indices;
    inst.label = preds[i].label;
    inst.confidence = preds[i].confidence;
    for (int p : inst.point_indices)
      if (p < 0 || static_cast<size_t>(p) >= scene.points.size())
        throw ovlift::consistency_error("prediction point " + std::to_string(p) +
                                        " is outside the scene cloud");
    instances.push_back(std::move(inst));
  }
  ovlift::export_colored_ply(out_path, scene.points, instances);
  std::cout << "wrote " << out_path << " (" << scene.points.size() << " points, "
            << instances.size() << " instances)\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"ovlift: open-vocabulary 3D instance lifting"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run the full pipeline on a scene");
  std::string run_config;
  run->add_option("-c,--config", run_config, "flat key = value config file");
  ConfigFlags run_flags;
  run_flags.attach(run, true);

  auto* eval = app.add_subcommand("eval", "score a prediction directory against ground truth");
  std::string eval_pred, eval_scene;
  int eval_gt_min_points = 20;
  eval->add_option("--pred", eval_pred, "prediction directory (instances.json + instance_ids.txt)")
      ->required();
  eval->add_option("--scene", eval_scene, "scene directory holding the ground truth")->required();
  eval->add_option("--gt_min_points", eval_gt_min_points,
                   "min points for a box-derived GT instance (default 20)");

  auto* synth = app.add_subcommand("synth", "generate a synthetic scene from a spec");
  std::string synth_spec, synth_out, synth_fixtures;
  uint64_t synth_seed = 0;
  synth->add_option("--spec", synth_spec, "scene spec JSON")->required();
  synth->add_option("--out", synth_out, "scene directory to write")->required();
  synth->add_option("--seed", synth_seed, "generation seed (default 0)");
  synth->add_option("--record-fixtures", synth_fixtures,
                    "also record oracle-backend fixtures into this directory");
  ConfigFlags synth_flags;
  synth_flags.attach(synth, false);

  auto* exp = app.add_subcommand("export-ply", "write an instance-colored point cloud");
  std::string exp_scene, exp_pred, exp_out;
  exp->add_option("--scene", exp_scene, "scene directory")->required();
  exp->add_option("--pred", exp_pred, "prediction directory")->required();
  exp->add_option("--out", exp_out, "output .ply path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(run_config, run_flags.given(run));
    if (eval->parsed()) return cmd_eval(eval_pred, eval_scene, eval_gt_min_points);
    if (synth->parsed())
      return cmd_synth(synth_spec, synth_out, synth_seed, synth_fixtures,
                       synth_flags.given(synth));
    if (exp->parsed()) return cmd_export_ply(exp_scene, exp_pred, exp_out);
  } catch (const ovlift::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ovlift::argument_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
