#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovlift/common.hpp"
#include "ovlift/ply.hpp"
#include "ovlift/png16.hpp"
#include "ovlift/scene.hpp"

namespace ovlift {

// Scene directory layout:
//   points.ply            point cloud (x,y,z float, optional uchar rgb)
//   intrinsics.txt        "fx fy cx cy width height", shared by all frames
//   frames.txt            manifest, one integer frame id per line
//   depth/<id>.png        16-bit grayscale, value = millimeters, 0 = invalid
//   poses/<id>.txt        4x4 row-major camera-to-world matrix, 4 lines
//   images/<id>           opaque image refs for backends (existence not required)
//   gt_boxes.json         optional: [{center, half_extents, rotation, label}]
//   gt_instance_ids.txt   optional: one instance id per point (0 = unannotated)
//   gt_labels.json        optional: {"<id>": "<label>"}

namespace fs = std::filesystem;

inline Intrinsics read_intrinsics_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open: " + path);
  Intrinsics k;
  if (!(in >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height))
    throw consistency_error("bad intrinsics file: " + path);
  return k;
}

inline void write_intrinsics_file(const std::string& path, const Intrinsics& k) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << ' ' << k.width << ' ' << k.height
      << '\n';
}

/// Pose file: 4 lines of 4 floats, row-major camera-to-world. Returns world-to-camera.
inline RigidTransform read_pose_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open: " + path);
  double m[16];
  for (int i = 0; i < 16; ++i)
    if (!(in >> m[i])) throw consistency_error("bad pose file (need 4x4 floats): " + path);
  RigidTransform cam_to_world;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cam_to_world.rotation(r, c) = m[r * 4 + c];
  cam_to_world.translation = {m[3], m[7], m[11]};
  if (std::abs(m[12]) > 1e-9 || std::abs(m[13]) > 1e-9 || std::abs(m[14]) > 1e-9 ||
      std::abs(m[15] - 1.0) > 1e-9)
    throw consistency_error("pose last row is not [0 0 0 1]: " + path);
  return cam_to_world.inverse();
}

inline void write_pose_file(const std::string& path, const RigidTransform& world_to_cam) {
  RigidTransform c2w = world_to_cam.inverse();
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out.precision(17);
  for (int r = 0; r < 3; ++r)
    out << c2w.rotation(r, 0) << ' ' << c2w.rotation(r, 1) << ' ' << c2w.rotation(r, 2) << ' '
        << c2w.translation[r] << '\n';
  out << "0 0 0 1\n";
}

inline DepthMap read_depth_png(const std::string& path) {
  Image16 img = read_png16(path);
  DepthMap d(img.width, img.height);
  for (size_t i = 0; i < img.pixels.size(); ++i)
    d.meters[i] = static_cast<float>(img.pixels[i]) / 1000.0f;
  return d;
}

inline void write_depth_png(const std::string& path, const DepthMap& d) {
  Image16 img;
  img.width = d.width;
  img.height = d.height;
  img.pixels.resize(d.meters.size());
  for (size_t i = 0; i < d.meters.size(); ++i) {
    double mm = std::round(static_cast<double>(d.meters[i]) * 1000.0);
    img.pixels[i] = static_cast<uint16_t>(std::clamp(mm, 0.0, 65535.0));
  }
  write_png16(path, img);
}

inline Scene load_scene(const std::string& dir) {
  fs::path root(dir);
  if (!fs::is_directory(root)) throw io_error("scene directory not found: " + dir);

  fs::path points_path = root / "points.ply";
  if (!fs::exists(points_path)) throw io_error("missing point file: " + points_path.string());
  PlyCloud cloud = read_ply(points_path.string());

  fs::path intr_path = root / "intrinsics.txt";
  if (!fs::exists(intr_path)) throw io_error("missing intrinsics file: " + intr_path.string());
  Intrinsics intr = read_intrinsics_file(intr_path.string());

  fs::path manifest_path = root / "frames.txt";
  if (!fs::exists(manifest_path))
    throw io_error("missing frames manifest: " + manifest_path.string());
  std::vector<int> frame_ids;
  {
    std::ifstream in(manifest_path);
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      int id;
      if (ls >> id) frame_ids.push_back(id);
    }
  }

  // All poses must exist before any frame is loaded; a count mismatch between
  // the manifest and the pose files is a consistency error, not a load error.
  std::vector<int> missing_poses;
  for (int id : frame_ids)
    if (!fs::exists(root / "poses" / (std::to_string(id) + ".txt"))) missing_poses.push_back(id);
  if (!missing_poses.empty()) {
    std::ostringstream msg;
    msg << "frames manifest lists " << frame_ids.size() << " frames but "
        << (frame_ids.size() - missing_poses.size()) << " pose files exist (missing frame";
    for (int id : missing_poses) msg << ' ' << id;
    msg << ')';
    throw consistency_error(msg.str());
  }

  Scene scene;
  scene.points = std::move(cloud.points);
  scene.colors = std::move(cloud.colors);
  for (int id : frame_ids) {
    PosedFrame f;
    f.frame_id = id;
    f.intrinsics = intr;
    f.world_to_cam = read_pose_file((root / "poses" / (std::to_string(id) + ".txt")).string());
    fs::path depth_path = root / "depth" / (std::to_string(id) + ".png");
    if (!fs::exists(depth_path))
      throw io_error("missing depth map for frame " + std::to_string(id) + ": " +
                     depth_path.string());
    f.depth = read_depth_png(depth_path.string());
    f.image_ref = (root / "images" / std::to_string(id)).string();
    scene.frames.push_back(std::move(f));
  }
  std::sort(scene.frames.begin(), scene.frames.end(),
            [](const PosedFrame& a, const PosedFrame& b) { return a.frame_id < b.frame_id; });
  validate_scene(scene);
  return scene;
}

inline void save_scene(const Scene& scene, const std::string& dir) {
  fs::path root(dir);
  fs::create_directories(root / "depth");
  fs::create_directories(root / "poses");
  write_ply((root / "points.ply").string(), scene.points, scene.colors);
  if (scene.frames.empty()) throw argument_error("save_scene: scene has no frames");
  write_intrinsics_file((root / "intrinsics.txt").string(), scene.frames.front().intrinsics);
  std::ofstream manifest(root / "frames.txt");
  for (const PosedFrame& f : scene.frames) {
    manifest << f.frame_id << '\n';
    write_pose_file((root / "poses" / (std::to_string(f.frame_id) + ".txt")).string(),
                    f.world_to_cam);
    write_depth_png((root / "depth" / (std::to_string(f.frame_id) + ".png")).string(), f.depth);
  }
}

/// Frames at indices 0, stride, 2*stride, ...
inline std::vector<PosedFrame> sample_frames(const std::vector<PosedFrame>& frames,
                                             size_t stride) {
  if (stride == 0) throw argument_error("sample_frames: stride must be >= 1");
  std::vector<PosedFrame> out;
  for (size_t i = 0; i < frames.size(); i += stride) out.push_back(frames[i]);
  return out;
}

/// Instance ids from 3D box annotations. A box keeps its id only when it
/// contains at least min_points points; a point in several surviving boxes
/// goes to the smallest-volume one (tie -> lower box index). Ids are
/// box_index + 1; labels come from the boxes.
inline GroundTruth assign_instances_from_boxes(const std::vector<Vec3>& points,
                                               const std::vector<OrientedBox>& boxes,
                                               int min_points) {
  if (min_points < 1) throw argument_error("assign_instances_from_boxes: min_points must be >= 1");
  for (const OrientedBox& b : boxes) validate_box(b);

  const int n_boxes = static_cast<int>(boxes.size());
  std::vector<std::vector<int>> containing(points.size());
  std::vector<int> raw_count(n_boxes, 0);
  for (size_t i = 0; i < points.size(); ++i)
    for (int b = 0; b < n_boxes; ++b)
      if (boxes[b].contains(points[i])) {
        containing[i].push_back(b);
        ++raw_count[b];
      }

  std::vector<bool> survives(n_boxes);
  for (int b = 0; b < n_boxes; ++b) survives[b] = raw_count[b] >= min_points;

  GroundTruth gt;
  gt.instance_ids.assign(points.size(), 0);
  for (size_t i = 0; i < points.size(); ++i) {
    int best = -1;
    double best_volume = std::numeric_limits<double>::infinity();
    for (int b : containing[i]) {
      if (!survives[b]) continue;
      double vol = boxes[b].volume();
      if (vol < best_volume) {
        best_volume = vol;
        best = b;
      }
    }
    if (best >= 0) gt.instance_ids[i] = best + 1;
  }
  for (int b = 0; b < n_boxes; ++b)
    if (survives[b]) gt.labels[b + 1] = boxes[b].label;
  return gt;
}

inline std::vector<OrientedBox> read_boxes_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw consistency_error("bad JSON in " + path + ": " + e.what());
  }
  if (!j.is_array()) throw consistency_error("expected a JSON array of boxes in " + path);
  std::vector<OrientedBox> boxes;
  for (const auto& item : j) {
    OrientedBox b;
    try {
      auto c = item.at("center");
      auto he = item.at("half_extents");
      auto r = item.at("rotation");
      b.center = {c.at(0), c.at(1), c.at(2)};
      b.half_extents = {he.at(0), he.at(1), he.at(2)};
      for (int i = 0; i < 9; ++i) b.rotation.m[i] = r.at(i);
      b.label = item.at("label").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw consistency_error("bad box record in " + path + ": " + e.what());
    }
    validate_box(b);
    boxes.push_back(std::move(b));
  }
  return boxes;
}

inline void write_boxes_json(const std::string& path, const std::vector<OrientedBox>& boxes) {
  nlohmann::json j = nlohmann::json::array();
  for (const OrientedBox& b : boxes) {
    nlohmann::json item;
    item["center"] = {b.center.x, b.center.y, b.center.z};
    item["half_extents"] = {b.half_extents.x, b.half_extents.y, b.half_extents.z};
    item["rotation"] = b.rotation.m;
    item["label"] = b.label;
    j.push_back(item);
  }
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
}

inline void write_ground_truth(const std::string& dir, const GroundTruth& gt) {
  fs::path root(dir);
  std::ofstream ids(root / "gt_instance_ids.txt");
  if (!ids) throw io_error("cannot open for writing: " + (root / "gt_instance_ids.txt").string());
  for (int id : gt.instance_ids) ids << id << '\n';
  nlohmann::json labels = nlohmann::json::object();
  for (const auto& [id, label] : gt.labels) labels[std::to_string(id)] = label;
  std::ofstream lf(root / "gt_labels.json");
  lf << labels.dump(2) << '\n';
  if (!gt.category_group.empty()) {
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [label, group] : gt.category_group) groups[label] = group;
    std::ofstream gf(root / "gt_groups.json");
    gf << groups.dump(2) << '\n';
  }
}

inline GroundTruth read_ground_truth(const std::string& dir) {
  fs::path root(dir);
  fs::path ids_path = root / "gt_instance_ids.txt";
  fs::path labels_path = root / "gt_labels.json";
  if (!fs::exists(ids_path)) throw io_error("missing ground truth file: " + ids_path.string());
  GroundTruth gt;
  std::ifstream ids(ids_path);
  int id;
  while (ids >> id) gt.instance_ids.push_back(id);
  if (fs::exists(labels_path)) {
    std::ifstream lf(labels_path);
    nlohmann::json j;
    try {
      lf >> j;
    } catch (const nlohmann::json::exception& e) {
      throw consistency_error("bad JSON in " + labels_path.string() + ": " + e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it)
      gt.labels[std::stoi(it.key())] = it.value().get<std::string>();
  }
  fs::path groups_path = root / "gt_groups.json";
  if (fs::exists(groups_path)) {
    std::ifstream gf(groups_path);
    nlohmann::json j;
    try {
      gf >> j;
    } catch (const nlohmann::json::exception& e) {
      throw consistency_error("bad JSON in " + groups_path.string() + ": " + e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it)
      gt.category_group[it.key()] = it.value().get<std::string>();
  }
  validate_ground_truth(gt);
  return gt;
}

/// Ground truth for a scene directory: direct per-point files when present,
/// otherwise derived from gt_boxes.json.
inline GroundTruth load_scene_ground_truth(const std::string& dir,
                                           const std::vector<Vec3>& points,
                                           int min_points = 20) {
  fs::path root(dir);
  if (fs::exists(root / "gt_instance_ids.txt")) return read_ground_truth(dir);
  fs::path boxes_path = root / "gt_boxes.json";
  if (!fs::exists(boxes_path))
    throw io_error("no ground truth in scene directory (need gt_instance_ids.txt or gt_boxes.json): " +
                   dir);
  auto boxes = read_boxes_json(boxes_path.string());
  return assign_instances_from_boxes(points, boxes, min_points);
}

} // namespace ovlift
