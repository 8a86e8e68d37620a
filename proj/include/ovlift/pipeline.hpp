#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovlift/backends.hpp"
#include "ovlift/common.hpp"
#include "ovlift/config.hpp"
#include "ovlift/eval.hpp"
#include "ovlift/geometry.hpp"
#include "ovlift/labeling.hpp"
#include "ovlift/mask.hpp"
#include "ovlift/merging.hpp"
#include "ovlift/overlap.hpp"
#include "ovlift/parallel.hpp"
#include "ovlift/ply.hpp"
#include "ovlift/scene_io.hpp"
#include "ovlift/superpoints.hpp"
#include "ovlift/synthbench.hpp"

namespace ovlift {

struct RunSummary {
  size_t n_points = 0;
  int n_frames_total = 0;
  int n_frames_sampled = 0;
  int n_superpoints = 0;
  int n_prompts = 0;
  int n_segmented_views = 0;
  int n_skipped_segments = 0; // (prompt, view) pairs without a mask
  int n_back_projections = 0;
  int n_coarse_masks = 0;
  int n_instances = 0;
  int merge_passes = 0;
  int n_tags = 0;
  int n_labeled_instances = 0;
  double label_coverage = 0.0; // labeled / instances
  std::vector<std::string> warnings;
  std::map<std::string, std::string> config;
};

struct PipelineOutput {
  RunSummary summary;
  std::vector<Instance> instances;
  size_t n_points = 0;
  // Diagnostics for --debug runs and tests.
  std::vector<Superpoint> superpoints;
  OverlapScoreTable table;
  CoarseAssembly assembly;
  MergeResult merge;
  std::map<std::string, double> stage_seconds;
};

namespace detail {

class StageClock {
public:
  explicit StageClock(std::map<std::string, double>& sink) : sink_(sink) {}
  template <typename F>
  auto run(const std::string& name, F&& f) {
    auto start = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      note(name, start);
    } else {
      auto out = f();
      note(name, start);
      return out;
    }
  }

private:
  void note(const std::string& name, std::chrono::steady_clock::time_point start) {
    auto end = std::chrono::steady_clock::now();
    sink_[name] = std::chrono::duration<double>(end - start).count();
  }
  std::map<std::string, double>& sink_;
};

inline FrameRef frame_ref(const PosedFrame& f) {
  return {f.frame_id, f.image_ref, f.intrinsics.width, f.intrinsics.height};
}

} // namespace detail

/// The full procedure against an already-loaded scene and a live backend.
/// Deterministic for a fixed (scene, backend answers, config): parallel work
/// writes into per-index slots only.
inline PipelineOutput run_pipeline(const PipelineConfig& cfg, const Scene& scene,
                                   Backend& backend) {
  validate_config(cfg);
  PipelineOutput out;
  detail::StageClock clock(out.stage_seconds);
  RunSummary& sum = out.summary;
  sum.config = config_echo(cfg);
  const std::vector<Vec3>& points = scene.points;
  out.n_points = points.size();
  sum.n_points = points.size();
  sum.n_frames_total = static_cast<int>(scene.frames.size());
  const int workers = resolve_workers(cfg.workers);

  std::vector<PosedFrame> frames = sample_frames(scene.frames, static_cast<size_t>(cfg.frame_stride));
  sum.n_frames_sampled = static_cast<int>(frames.size());

  out.superpoints = clock.run("superpoints", [&] {
    WeightedGraph graph = build_graph(scene, cfg.superpoint.k_nn, workers);
    return segment_superpoints(graph, cfg.superpoint.k_fh, cfg.superpoint.min_size);
  });
  sum.n_superpoints = static_cast<int>(out.superpoints.size());
  std::vector<Superpoint> prompts = select_prompts(out.superpoints, cfg.n_prompts);
  sum.n_prompts = static_cast<int>(prompts.size());
  if (prompts.empty())
    sum.warnings.push_back("no superpoints survived segmentation; output has no instances");

  std::vector<FrameProjections> projections(frames.size());
  clock.run("project_frames", [&] {
    parallel_for(frames.size(), workers, [&](size_t fi) {
      projections[fi] = FrameProjections::build(frames[fi], points, cfg.eps_depth);
    });
  });

  // Per-prompt: rank views by cached visibility, sample pixel prompts, ask
  // the backend for a mask, and back-project it. Slot-addressed results keep
  // the outcome independent of scheduling.
  struct PromptWork {
    std::vector<BackProjection> bps;
    std::vector<ViewMaskRef> view_masks;
    int skipped = 0;
    int segmented = 0;
  };
  std::vector<PromptWork> work(prompts.size());
  clock.run("segment_views", [&] {
    parallel_for(prompts.size(), workers, [&](size_t n) {
      const Superpoint& prompt = prompts[n];
      std::vector<RankedView> ranked;
      for (size_t fi = 0; fi < frames.size(); ++fi) {
        int count = 0;
        for (int p : prompt.point_indices) count += projections[fi].vis[static_cast<size_t>(p)];
        if (count > 0)
          ranked.push_back({static_cast<int>(fi), frames[fi].frame_id, count});
      }
      std::sort(ranked.begin(), ranked.end(), [](const RankedView& a, const RankedView& b) {
        if (a.visible_count != b.visible_count) return a.visible_count > b.visible_count;
        return a.frame_id < b.frame_id;
      });
      if (ranked.size() > static_cast<size_t>(cfg.t_views))
        ranked.resize(static_cast<size_t>(cfg.t_views));

      for (const RankedView& view : ranked) {
        const FrameProjections& fp = projections[static_cast<size_t>(view.frame_index)];
        const PosedFrame& frame = frames[static_cast<size_t>(view.frame_index)];
        std::vector<PixelPoint> pixels;
        for (int p : prompt.point_indices)
          if (fp.vis[static_cast<size_t>(p)])
            pixels.push_back({fp.u[static_cast<size_t>(p)], fp.v[static_cast<size_t>(p)],
                              fp.z[static_cast<size_t>(p)]});
        std::vector<PixelPoint> chosen = sample_pixel_prompts(pixels, cfg.k_pixel_prompts);
        std::optional<Mask2D> mask =
            backend.segment(detail::frame_ref(frame), static_cast<int>(n), chosen);
        if (!mask) {
          ++work[n].skipped;
          continue;
        }
        if (mask->width != frame.intrinsics.width || mask->height != frame.intrinsics.height)
          throw backend_error("backend mask size " + std::to_string(mask->width) + "x" +
                              std::to_string(mask->height) + " does not match frame " +
                              std::to_string(frame.frame_id));
        ++work[n].segmented;
        BackProjection bp = back_project_mask_cached(fp, frame.frame_id, *mask);
        bp.prompt_id = static_cast<int>(n);
        work[n].bps.push_back(std::move(bp));
        ViewMaskRef vm;
        vm.view_id = frame.frame_id;
        vm.mask.frame_id = frame.frame_id;
        vm.mask.prompt_id = static_cast<int>(n);
        vm.mask.width = mask->width;
        vm.mask.height = mask->height;
        vm.mask.rle = rle_encode(*mask);
        work[n].view_masks.push_back(std::move(vm));
      }
    });
  });

  std::vector<BackProjection> back_projections;
  for (size_t n = 0; n < work.size(); ++n) {
    sum.n_skipped_segments += work[n].skipped;
    sum.n_segmented_views += work[n].segmented;
    for (BackProjection& bp : work[n].bps) back_projections.push_back(std::move(bp));
  }
  sum.n_back_projections = static_cast<int>(back_projections.size());

  out.table = clock.run("score_table", [&] {
    return build_score_table(out.superpoints, back_projections, points.size(),
                             static_cast<int>(prompts.size()), cfg.theta);
  });
  out.assembly = assemble_coarse_masks(out.table, out.superpoints, prompts);
  for (CoarseMask& cm : out.assembly.masks)
    cm.view_masks = std::move(work[static_cast<size_t>(cm.id)].view_masks);
  sum.n_coarse_masks = static_cast<int>(out.assembly.masks.size());

  out.merge = clock.run("merge", [&] {
    MergeConfig mcfg;
    mcfg.tau = cfg.tau;
    mcfg.column_norm = cfg.column_norm;
    return merge_coarse_masks(out.table, out.assembly.masks, mcfg);
  });
  sum.n_instances = static_cast<int>(out.merge.instances.size());
  sum.merge_passes = out.merge.passes;

  // Open-tag collection over the sampled frames.
  std::vector<std::vector<std::string>> frame_tags(frames.size());
  clock.run("tags", [&] {
    parallel_for(frames.size(), workers,
                 [&](size_t fi) { frame_tags[fi] = backend.tag(detail::frame_ref(frames[fi])); });
  });
  std::set<std::string> blocklist;
  if (!cfg.blocklist_path.empty()) blocklist = load_blocklist(cfg.blocklist_path);
  TagSet tag_set = collect_open_tags(frame_tags, blocklist);
  sum.n_tags = static_cast<int>(tag_set.tags.size());

  std::vector<CropEmbedding> crops;
  if (tag_set.tags.empty()) {
    sum.warnings.push_back("tag set is empty after filtering; instances stay unlabeled");
  } else {
    tag_set.text_embeddings = clock.run("embed_texts", [&] {
      return backend.embed_texts(tag_set.tags);
    });

    struct CropQuery {
      int mask_id;
      int frame_index;
      int view_id;
      const MaskRecord* record;
    };
    std::vector<CropQuery> queries;
    std::map<int, int> frame_index_of;
    for (size_t fi = 0; fi < frames.size(); ++fi) frame_index_of[frames[fi].frame_id] = static_cast<int>(fi);
    for (const CoarseMask& cm : out.assembly.masks)
      for (const ViewMaskRef& vm : cm.view_masks)
        queries.push_back({cm.id, frame_index_of.at(vm.view_id), vm.view_id, &vm.mask});

    std::vector<std::optional<CropEmbedding>> slots(queries.size());
    clock.run("embed_crops", [&] {
      parallel_for(queries.size(), workers, [&](size_t qi) {
        const CropQuery& q = queries[qi];
        Mask2D mask = q.record->decode();
        std::optional<CropBox> crop = padded_bbox(mask, 0.10);
        if (!crop) return;
        const PosedFrame& frame = frames[static_cast<size_t>(q.frame_index)];
        std::optional<std::vector<double>> vec =
            backend.embed_crop(detail::frame_ref(frame), q.mask_id, *crop);
        if (!vec) return;
        CropEmbedding ce;
        ce.coarse_mask_id = q.mask_id;
        ce.view_id = q.view_id;
        ce.vector = std::move(*vec);
        slots[qi] = std::move(ce);
      });
    });
    for (size_t qi = 0; qi < slots.size(); ++qi) {
      if (slots[qi]) {
        crops.push_back(std::move(*slots[qi]));
      } else {
        sum.warnings.push_back("no crop embedding for coarse mask " +
                               std::to_string(queries[qi].mask_id) + " view " +
                               std::to_string(queries[qi].view_id));
      }
    }
  }

  out.instances = clock.run("match_labels", [&] {
    return match_labels(out.merge.instances, crops, tag_set, cfg.label_strategy, &sum.warnings);
  });
  for (const Instance& inst : out.instances)
    if (inst.label) ++sum.n_labeled_instances;
  sum.label_coverage = out.instances.empty()
                           ? 0.0
                           : static_cast<double>(sum.n_labeled_instances) /
                                 static_cast<double>(out.instances.size());
  return out;
}

inline nlohmann::json summary_to_json(const RunSummary& s) {
  nlohmann::json j;
  j["n_points"] = s.n_points;
  j["n_frames_total"] = s.n_frames_total;
  j["n_frames_sampled"] = s.n_frames_sampled;
  j["n_superpoints"] = s.n_superpoints;
  j["n_prompts"] = s.n_prompts;
  j["n_segmented_views"] = s.n_segmented_views;
  j["n_skipped_segments"] = s.n_skipped_segments;
  j["n_back_projections"] = s.n_back_projections;
  j["n_coarse_masks"] = s.n_coarse_masks;
  j["n_instances"] = s.n_instances;
  j["merge_passes"] = s.merge_passes;
  j["n_tags"] = s.n_tags;
  j["n_labeled_instances"] = s.n_labeled_instances;
  j["label_coverage"] = s.label_coverage;
  j["warnings"] = s.warnings;
  j["config"] = s.config;
  return j;
}

/// instances.json + instance_ids.txt + run_summary.json (+ run_timings.json;
/// timings live apart so the main outputs are bit-identical across reruns).
inline void write_pipeline_outputs(const PipelineOutput& out, const std::string& dir,
                                   bool debug = false) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  fs::path root(dir);
  write_instances_json((root / "instances.json").string(), out.instances);
  write_instance_ids((root / "instance_ids.txt").string(), out.n_points, out.instances);
  {
    std::ofstream f(root / "run_summary.json");
    if (!f) throw io_error("cannot open for writing: " + (root / "run_summary.json").string());
    f << summary_to_json(out.summary).dump(2) << '\n';
  }
  {
    nlohmann::json t = out.stage_seconds;
    std::ofstream f(root / "run_timings.json");
    f << t.dump(2) << '\n';
  }
  if (debug) {
    write_superpoint_partition((root / "superpoints.txt").string(), out.n_points,
                               out.superpoints);
    write_score_table_csv((root / "score_table.csv").string(), out.table);
    nlohmann::json masks = nlohmann::json::array();
    for (const CoarseMask& cm : out.assembly.masks) {
      nlohmann::json m;
      m["id"] = cm.id;
      m["member_superpoints"] = cm.member_superpoints;
      m["point_count"] = cm.point_indices.size();
      masks.push_back(m);
    }
    std::ofstream f(root / "coarse_masks.json");
    f << masks.dump(2) << '\n';
  }
}

inline std::unique_ptr<Backend> make_backend(const PipelineConfig& cfg) {
  if (!cfg.backend_fixture.empty()) return std::make_unique<FixtureBackend>(cfg.backend_fixture);
  if (!cfg.backend_subprocess.empty())
    return std::make_unique<SubprocessBackend>(cfg.backend_subprocess, cfg.backend_pool);
  throw config_error("no backend configured (set backend.fixture or backend.subprocess)");
}

/// Config-driven entry: load scene, build backend, run, write outputs.
inline PipelineOutput run_pipeline(const PipelineConfig& cfg) {
  validate_config(cfg);
  if (cfg.scene_dir.empty()) throw config_error("scene directory not set");
  if (cfg.output_dir.empty()) throw config_error("output directory not set");
  Scene scene = load_scene(cfg.scene_dir);
  std::unique_ptr<Backend> backend = make_backend(cfg);
  PipelineOutput out = run_pipeline(cfg, scene, *backend);
  write_pipeline_outputs(out, cfg.output_dir, cfg.debug);
  return out;
}

/// Reads a prediction directory (instances.json + instance_ids.txt). Missing
/// files mean zero predictions rather than an error, so an empty run can
/// still be scored.
inline std::vector<PredictionRecord> read_predictions(const std::string& dir,
                                                      std::vector<std::string>* warnings = nullptr) {
  namespace fs = std::filesystem;
  fs::path root(dir);
  std::vector<PredictionRecord> preds;
  fs::path inst_path = root / "instances.json";
  fs::path ids_path = root / "instance_ids.txt";
  if (!fs::exists(inst_path) || !fs::exists(ids_path)) {
    if (warnings)
      warnings->push_back("prediction directory has no instances.json/instance_ids.txt: " + dir);
    return preds;
  }
  nlohmann::json j;
  {
    std::ifstream in(inst_path);
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw consistency_error("bad JSON in " + inst_path.string() + ": " + e.what());
    }
  }
  if (!j.is_array()) throw consistency_error("expected array in " + inst_path.string());
  std::map<int, size_t> index_of;
  for (const auto& item : j) {
    PredictionRecord rec;
    int id;
    try {
      id = item.at("id").get<int>();
      if (item.contains("label") && !item["label"].is_null())
        rec.label = item["label"].get<std::string>();
      if (item.contains("confidence") && !item["confidence"].is_null())
        rec.confidence = item["confidence"].get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw consistency_error("prediction schema error in " + inst_path.string() + ": " + e.what());
    }
    index_of[id] = preds.size();
    preds.push_back(std::move(rec));
  }
  std::ifstream ids(ids_path);
  int id, point = 0;
  while (ids >> id) {
    if (id >= 0) {
      auto it = index_of.find(id);
      if (it == index_of.end())
        throw consistency_error("instance_ids.txt names instance " + std::to_string(id) +
                                " missing from instances.json");
      preds[it->second].point_indices.push_back(point);
    }
    ++point;
  }
  // Instances whose points were all claimed elsewhere would break the
  // non-empty invariant; drop them with a note.
  std::vector<PredictionRecord> kept;
  for (auto& p : preds) {
    if (p.point_indices.empty()) {
      if (warnings) warnings->push_back("prediction with no points dropped");
      continue;
    }
    kept.push_back(std::move(p));
  }
  return kept;
}

inline MetricsReport run_eval(const std::string& pred_dir,
                              const std::vector<GtInstanceRecord>& gts,
                              const std::map<std::string, std::string>& groups = {},
                              std::vector<std::string>* warnings = nullptr) {
  std::vector<PredictionRecord> preds = read_predictions(pred_dir, warnings);
  MetricsReport report = evaluate(preds, gts, groups);
  write_metrics_json((std::filesystem::path(pred_dir) / "metrics.json").string(), report);
  return report;
}

/// Instance-colored point cloud for qualitative inspection; background gray.
inline void export_colored_ply(const std::string& path, const std::vector<Vec3>& points,
                               const std::vector<Instance>& instances) {
  std::vector<std::array<uint8_t, 3>> colors(points.size(), {128, 128, 128});
  for (const Instance& inst : instances) {
    auto c = detail::instance_color(inst.id + 1);
    for (int p : inst.point_indices) colors[static_cast<size_t>(p)] = c;
  }
  write_ply(path, points, colors);
}

} // namespace ovlift
