#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ovlift/common.hpp"
#include "ovlift/math.hpp"

namespace ovlift {

struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
};

/// Depth in meters, 0 = invalid.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> meters;

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), meters(static_cast<size_t>(w) * h, 0.0f) {}

  float at(int x, int y) const { return meters[static_cast<size_t>(y) * width + x]; }
  float& at(int x, int y) { return meters[static_cast<size_t>(y) * width + x]; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

struct PosedFrame {
  int frame_id = 0;
  Intrinsics intrinsics;
  RigidTransform world_to_cam;
  DepthMap depth;
  std::string image_ref; // opaque handle handed to backends, never decoded here

  int width() const { return intrinsics.width; }
  int height() const { return intrinsics.height; }
};

inline void validate_frame(const PosedFrame& f) {
  const Intrinsics& k = f.intrinsics;
  if (k.width <= 0 || k.height <= 0)
    throw consistency_error("frame " + std::to_string(f.frame_id) + ": non-positive image size");
  if (!(k.fx > 0) || !(k.fy > 0))
    throw consistency_error("frame " + std::to_string(f.frame_id) + ": fx,fy must be > 0");
  if (!(k.cx >= 0 && k.cx < k.width) || !(k.cy >= 0 && k.cy < k.height))
    throw consistency_error("frame " + std::to_string(f.frame_id) +
                            ": principal point outside image");
  if (!is_rotation(f.world_to_cam.rotation, 1e-6))
    throw consistency_error("frame " + std::to_string(f.frame_id) +
                            ": pose rotation is not orthonormal with det +1");
  if (f.depth.width != k.width || f.depth.height != k.height)
    throw consistency_error("frame " + std::to_string(f.frame_id) +
                            ": depth dimensions do not match declared width/height");
  for (float d : f.depth.meters)
    if (!(d >= 0.0f) || !std::isfinite(d))
      throw consistency_error("frame " + std::to_string(f.frame_id) +
                              ": depth values must be finite and >= 0");
}

struct Scene {
  std::vector<Vec3> points;
  std::vector<std::array<uint8_t, 3>> colors; // empty or one RGB per point
  std::vector<std::pair<int, int>> mesh_edges; // optional, no self-loops
  std::vector<PosedFrame> frames;
};

inline void validate_scene(const Scene& s) {
  if (s.points.empty()) throw consistency_error("scene has no points");
  for (const Vec3& p : s.points)
    if (!is_finite(p)) throw consistency_error("scene contains non-finite point coordinates");
  if (!s.colors.empty() && s.colors.size() != s.points.size())
    throw consistency_error("color count does not match point count");
  const int n = static_cast<int>(s.points.size());
  for (const auto& [a, b] : s.mesh_edges) {
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw consistency_error("mesh edge references invalid point index");
    if (a == b) throw consistency_error("mesh edge is a self-loop");
  }
  for (const PosedFrame& f : s.frames) validate_frame(f);
}

/// Per-point instance ids; 0 = unannotated. Every nonzero id has a label.
struct GroundTruth {
  std::vector<int> instance_ids;
  std::map<int, std::string> labels;
  std::map<std::string, std::string> category_group; // optional label -> group tag
};

inline void validate_ground_truth(const GroundTruth& gt) {
  for (int id : gt.instance_ids)
    if (id != 0 && gt.labels.find(id) == gt.labels.end())
      throw consistency_error("ground truth instance id " + std::to_string(id) + " has no label");
}

struct OrientedBox {
  Vec3 center;
  Vec3 half_extents;   // strictly positive
  Mat3 rotation;       // box-to-world, orthonormal
  std::string label;

  bool contains(const Vec3& p) const {
    Vec3 local = rotation.transposed() * (p - center);
    return std::abs(local.x) <= half_extents.x && std::abs(local.y) <= half_extents.y &&
           std::abs(local.z) <= half_extents.z;
  }
  double volume() const { return 8.0 * half_extents.x * half_extents.y * half_extents.z; }
};

inline void validate_box(const OrientedBox& b) {
  if (!(b.half_extents.x > 0 && b.half_extents.y > 0 && b.half_extents.z > 0))
    throw consistency_error("oriented box half extents must be strictly positive");
  if (!is_rotation(b.rotation, 1e-6))
    throw consistency_error("oriented box rotation is not orthonormal");
}

} // namespace ovlift
