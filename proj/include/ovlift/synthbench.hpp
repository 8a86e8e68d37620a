#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovlift/backends.hpp"
#include "ovlift/common.hpp"
#include "ovlift/labeling.hpp"
#include "ovlift/math.hpp"
#include "ovlift/scene.hpp"

namespace ovlift {

struct ObjectSpec {
  std::string shape; // box | sphere | plane
  std::string label;
  int points = 0;
  Vec3 center;
  Vec3 size;          // box: full extents; plane: size.x/size.y rectangle
  double radius = 0;  // sphere
  Vec3 normal{0, 0, 1}; // plane
  double yaw = 0;     // box/plane rotation about world z
};

struct NoiseSpec {
  double sigma = 0;   // point jitter, meters
  double sigma_e = 0; // embedding jitter
};

struct SceneSpec {
  std::vector<ObjectSpec> objects;
  std::vector<RigidTransform> camera_poses; // world-to-camera
  Intrinsics intrinsics;
  NoiseSpec noise;
  std::vector<std::string> distractor_tags;
  int px_radius = 1;
};

inline void validate_scene_spec(const SceneSpec& spec) {
  if (spec.objects.empty()) throw argument_error("scene spec has no objects");
  if (spec.camera_poses.empty()) throw argument_error("scene spec has no camera poses");
  if (spec.noise.sigma < 0 || spec.noise.sigma_e < 0)
    throw argument_error("scene spec noise sigmas must be >= 0");
  if (spec.px_radius < 0) throw argument_error("scene spec px_radius must be >= 0");
  if (spec.intrinsics.width < 1 || spec.intrinsics.height < 1)
    throw argument_error("scene spec intrinsics have empty image size");
  for (const ObjectSpec& o : spec.objects) {
    if (o.shape != "box" && o.shape != "sphere" && o.shape != "plane")
      throw argument_error("unknown object shape: " + o.shape);
    if (o.points < 1) throw argument_error("object \"" + o.label + "\" has no points");
    if (o.label.empty()) throw argument_error("object without label");
    if (o.shape == "sphere" && !(o.radius > 0))
      throw argument_error("sphere \"" + o.label + "\" needs radius > 0");
    if (o.shape == "box" && !(o.size.x > 0 && o.size.y > 0 && o.size.z > 0))
      throw argument_error("box \"" + o.label + "\" needs positive size");
    if (o.shape == "plane" && !(o.size.x > 0 && o.size.y > 0))
      throw argument_error("plane \"" + o.label + "\" needs positive size");
  }
}

/// World-to-camera look-at with +z forward, +y down (image convention).
inline RigidTransform look_at(const Vec3& eye, const Vec3& target, const Vec3& up = {0, 0, 1}) {
  Vec3 fwd = normalized(target - eye);
  Vec3 u = up;
  if (norm(cross(fwd, u)) < 1e-9) u = {0, 1, 0};
  Vec3 right = normalized(cross(fwd, u));
  Vec3 down = cross(fwd, right);
  RigidTransform w2c;
  for (int c = 0; c < 3; ++c) {
    w2c.rotation(0, c) = right[c];
    w2c.rotation(1, c) = down[c];
    w2c.rotation(2, c) = fwd[c];
  }
  w2c.translation = (w2c.rotation * eye) * -1.0;
  return w2c;
}

/// Cameras on a circle of the given radius, `height` above the center,
/// all looking at the center.
inline std::vector<RigidTransform> orbit_poses(const Vec3& center, double radius, double height,
                                               int count) {
  if (count < 1) throw argument_error("orbit_poses: count must be >= 1");
  std::vector<RigidTransform> poses;
  for (int i = 0; i < count; ++i) {
    double a = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(count);
    Vec3 eye = center + Vec3{radius * std::cos(a), radius * std::sin(a), height};
    poses.push_back(look_at(eye, center));
  }
  return poses;
}

inline SceneSpec read_scene_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open scene spec: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw consistency_error("bad JSON in " + path + ": " + e.what());
  }
  SceneSpec spec;
  try {
    auto k = j.at("intrinsics");
    spec.intrinsics.fx = k.at("fx");
    spec.intrinsics.fy = k.at("fy");
    spec.intrinsics.cx = k.at("cx");
    spec.intrinsics.cy = k.at("cy");
    spec.intrinsics.width = k.at("width");
    spec.intrinsics.height = k.at("height");
    if (j.contains("noise")) {
      spec.noise.sigma = j["noise"].value("sigma", 0.0);
      spec.noise.sigma_e = j["noise"].value("sigma_e", 0.0);
    }
    spec.px_radius = j.value("px_radius", 1);
    if (j.contains("distractor_tags"))
      for (const auto& t : j["distractor_tags"]) spec.distractor_tags.push_back(t.get<std::string>());
    for (const auto& o : j.at("objects")) {
      ObjectSpec obj;
      obj.shape = o.at("shape").get<std::string>();
      obj.label = fold_tag(o.at("label").get<std::string>());
      obj.points = o.at("points").get<int>();
      auto c = o.at("center");
      obj.center = {c.at(0), c.at(1), c.at(2)};
      if (o.contains("size")) {
        auto s = o["size"];
        obj.size = {s.at(0), s.at(1), s.size() > 2 ? s.at(2).get<double>() : 0.0};
      }
      obj.radius = o.value("radius", 0.0);
      obj.yaw = o.value("yaw", 0.0);
      if (o.contains("normal")) {
        auto n = o["normal"];
        obj.normal = {n.at(0), n.at(1), n.at(2)};
      }
      spec.objects.push_back(std::move(obj));
    }
    auto cams = j.at("cameras");
    if (cams.contains("orbit")) {
      auto orb = cams["orbit"];
      auto c = orb.at("center");
      spec.camera_poses = orbit_poses({c.at(0), c.at(1), c.at(2)}, orb.at("radius"),
                                      orb.at("height"), orb.at("count"));
    } else if (cams.contains("poses")) {
      for (const auto& p : cams["poses"]) {
        if (p.size() != 16)
          throw consistency_error("camera pose needs 16 row-major floats in " + path);
        RigidTransform c2w;
        for (int r = 0; r < 3; ++r)
          for (int col = 0; col < 4; ++col) {
            double x = p.at(r * 4 + col);
            if (col < 3)
              c2w.rotation(r, col) = x;
            else
              c2w.translation[r] = x;
          }
        spec.camera_poses.push_back(c2w.inverse());
      }
    } else {
      throw consistency_error("scene spec cameras need either \"orbit\" or \"poses\": " + path);
    }
  } catch (const nlohmann::json::exception& e) {
    throw consistency_error("bad scene spec " + path + ": " + e.what());
  }
  validate_scene_spec(spec);
  return spec;
}

namespace detail {

inline std::array<uint8_t, 3> instance_color(int id) {
  // Golden-angle hue walk, full saturation; deterministic and well separated.
  double h = std::fmod(static_cast<double>(id) * 0.61803398875, 1.0) * 6.0;
  double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  double rgb[3] = {0, 0, 0};
  switch (static_cast<int>(h)) {
    case 0: rgb[0] = 1; rgb[1] = x; break;
    case 1: rgb[0] = x; rgb[1] = 1; break;
    case 2: rgb[1] = 1; rgb[2] = x; break;
    case 3: rgb[1] = x; rgb[2] = 1; break;
    case 4: rgb[0] = x; rgb[2] = 1; break;
    default: rgb[0] = 1; rgb[2] = x; break;
  }
  return {static_cast<uint8_t>(55 + 200 * rgb[0]), static_cast<uint8_t>(55 + 200 * rgb[1]),
          static_cast<uint8_t>(55 + 200 * rgb[2])};
}

inline Vec3 sample_box_surface(const ObjectSpec& o, Rng& rng) {
  Vec3 h = o.size * 0.5;
  double axy = o.size.x * o.size.y, axz = o.size.x * o.size.z, ayz = o.size.y * o.size.z;
  double total = 2 * (axy + axz + ayz);
  double pick = rng.uniform() * total;
  Vec3 p;
  double u = rng.uniform() * 2 - 1, v = rng.uniform() * 2 - 1;
  if (pick < 2 * axy) {
    p = {u * h.x, v * h.y, pick < axy ? h.z : -h.z};
  } else if (pick < 2 * axy + 2 * axz) {
    p = {u * h.x, (pick < 2 * axy + axz) ? h.y : -h.y, v * h.z};
  } else {
    p = {(pick < 2 * (axy + axz) + ayz) ? h.x : -h.x, u * h.y, v * h.z};
  }
  Mat3 rz = axis_angle({0, 0, 1}, o.yaw);
  return rz * p + o.center;
}

inline Vec3 sample_sphere_surface(const ObjectSpec& o, Rng& rng) {
  Vec3 dir;
  do {
    dir = {rng.gaussian(), rng.gaussian(), rng.gaussian()};
  } while (norm(dir) < 1e-12);
  return o.center + normalized(dir) * o.radius;
}

inline Vec3 sample_plane_surface(const ObjectSpec& o, Rng& rng) {
  Vec3 n = normalized(o.normal);
  Vec3 seed = std::abs(n.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
  Vec3 a = normalized(cross(seed, n));
  Vec3 b = cross(n, a);
  Mat3 rz = axis_angle(n, o.yaw);
  a = rz * a;
  b = rz * b;
  double u = (rng.uniform() - 0.5) * o.size.x;
  double v = (rng.uniform() - 0.5) * o.size.y;
  return o.center + a * u + b * v;
}

} // namespace detail

/// Point z-buffer splat: every point whose projection lands in the image
/// writes its camera depth to all pixels within px_radius (Chebyshev) of its
/// pixel; the nearest depth wins. Optionally records which point won each
/// pixel. Untouched pixels stay 0 / -1.
inline DepthMap render_depth(const std::vector<Vec3>& points, const RigidTransform& world_to_cam,
                             const Intrinsics& intr, int px_radius,
                             std::vector<int>* winner_point = nullptr) {
  if (px_radius < 0) throw argument_error("render_depth: px_radius must be >= 0");
  DepthMap depth(intr.width, intr.height);
  if (winner_point) winner_point->assign(depth.meters.size(), -1);
  for (size_t i = 0; i < points.size(); ++i) {
    Vec3 cam = world_to_cam.apply(points[i]);
    if (cam.z <= 0) continue;
    double u = intr.fx * cam.x / cam.z + intr.cx;
    double v = intr.fy * cam.y / cam.z + intr.cy;
    if (!(u >= 0 && u < intr.width && v >= 0 && v < intr.height)) continue;
    int ui = static_cast<int>(std::floor(u + 0.5));
    int vi = static_cast<int>(std::floor(v + 0.5));
    for (int dy = -px_radius; dy <= px_radius; ++dy)
      for (int dx = -px_radius; dx <= px_radius; ++dx) {
        int x = ui + dx, y = vi + dy;
        if (x < 0 || x >= intr.width || y < 0 || y >= intr.height) continue;
        float& cell = depth.at(x, y);
        if (cell <= 0.0f || static_cast<float>(cam.z) < cell) {
          cell = static_cast<float>(cam.z);
          if (winner_point)
            (*winner_point)[static_cast<size_t>(y) * intr.width + x] = static_cast<int>(i);
        }
      }
  }
  return depth;
}

/// Instance id per pixel under the same z-buffer rules; 0 = background.
inline std::vector<int> render_instance_ids(const std::vector<Vec3>& points,
                                            const std::vector<int>& gt_ids,
                                            const RigidTransform& world_to_cam,
                                            const Intrinsics& intr, int px_radius) {
  std::vector<int> winner;
  render_depth(points, world_to_cam, intr, px_radius, &winner);
  std::vector<int> ids(winner.size(), 0);
  for (size_t i = 0; i < winner.size(); ++i)
    if (winner[i] >= 0) ids[i] = gt_ids[static_cast<size_t>(winner[i])];
  return ids;
}

struct GeneratedScene {
  Scene scene;
  GroundTruth gt;
};

/// Deterministic synthetic scene: points sampled on object surfaces with
/// jitter sigma, depth frames rendered along the camera path, ground truth
/// attached (instance id = object index + 1, group = shape name).
inline GeneratedScene generate_scene(const SceneSpec& spec, uint64_t seed) {
  validate_scene_spec(spec);
  GeneratedScene out;
  Rng rng(combine_seed(seed, 0x5ce9e5u));

  for (size_t oi = 0; oi < spec.objects.size(); ++oi) {
    const ObjectSpec& o = spec.objects[oi];
    int inst = static_cast<int>(oi) + 1;
    auto color = detail::instance_color(inst);
    for (int i = 0; i < o.points; ++i) {
      Vec3 p;
      if (o.shape == "box")
        p = detail::sample_box_surface(o, rng);
      else if (o.shape == "sphere")
        p = detail::sample_sphere_surface(o, rng);
      else
        p = detail::sample_plane_surface(o, rng);
      if (spec.noise.sigma > 0)
        p += Vec3{rng.gaussian(), rng.gaussian(), rng.gaussian()} * spec.noise.sigma;
      out.scene.points.push_back(p);
      out.scene.colors.push_back(color);
      out.gt.instance_ids.push_back(inst);
    }
    out.gt.labels[inst] = o.label;
    out.gt.category_group[o.label] = o.shape;
  }

  for (size_t ci = 0; ci < spec.camera_poses.size(); ++ci) {
    PosedFrame f;
    f.frame_id = static_cast<int>(ci);
    f.intrinsics = spec.intrinsics;
    f.world_to_cam = spec.camera_poses[ci];
    f.depth = render_depth(out.scene.points, f.world_to_cam, spec.intrinsics, spec.px_radius);
    f.image_ref = "synth://frame/" + std::to_string(ci);
    out.scene.frames.push_back(std::move(f));
  }
  validate_scene(out.scene);
  validate_ground_truth(out.gt);
  return out;
}

/// Backend that answers from ground truth instead of live models.
///   segment    -> silhouette of the instance holding the majority of the
///                 prompt pixels in this frame's id buffer
///   tag        -> labels of the instances visible in the frame + distractors
///   embeddings -> one orthonormal basis vector per label/distractor, plus
///                 sigma_e jitter, renormalized
/// Answers are exactly decodable when sigma_e = 0, which is what makes
/// end-to-end pipeline failures attributable.
class OracleBackend : public Backend {
public:
  OracleBackend(const Scene& scene, const GroundTruth& gt, const SceneSpec& spec, uint64_t seed)
      : sigma_e_(spec.noise.sigma_e), seed_(seed) {
    validate_ground_truth(gt);
    for (const auto& [id, label] : gt.labels) {
      std::string folded = fold_tag(label);
      if (!basis_.count(folded)) {
        int index = static_cast<int>(basis_.size());
        basis_[folded] = index;
        label_order_.push_back(folded);
      }
      label_of_instance_[id] = fold_tag(label);
    }
    for (const std::string& raw : spec.distractor_tags) {
      std::string folded = fold_tag(raw);
      if (!basis_.count(folded)) {
        basis_[folded] = static_cast<int>(basis_.size());
        distractors_.push_back(folded);
      }
    }
    dim_ = static_cast<int>(basis_.size());
    for (const PosedFrame& f : scene.frames)
      id_buffers_[f.frame_id] = render_instance_ids(scene.points, gt.instance_ids, f.world_to_cam,
                                                    f.intrinsics, spec.px_radius);
    width_ = scene.frames.empty() ? 0 : scene.frames.front().intrinsics.width;
    height_ = scene.frames.empty() ? 0 : scene.frames.front().intrinsics.height;
  }

  std::optional<Mask2D> segment(const FrameRef& frame, int prompt_id,
                                const std::vector<PixelPoint>& points) override {
    const std::vector<int>* buf = buffer_for(frame.frame_id);
    if (!buf) return std::nullopt;
    std::map<int, int> votes;
    for (const PixelPoint& p : points) {
      int ui = static_cast<int>(std::floor(p.u + 0.5));
      int vi = static_cast<int>(std::floor(p.v + 0.5));
      if (ui < 0 || ui >= width_ || vi < 0 || vi >= height_) continue;
      int id = (*buf)[static_cast<size_t>(vi) * width_ + ui];
      if (id > 0) ++votes[id];
    }
    if (votes.empty()) return std::nullopt;
    int instance = 0, best = 0;
    for (const auto& [id, count] : votes)
      if (count > best) {
        best = count;
        instance = id;
      }
    {
      std::lock_guard<std::mutex> lock(mu_);
      segmented_instance_[{frame.frame_id, prompt_id}] = instance;
    }
    Mask2D mask(width_, height_);
    for (size_t i = 0; i < buf->size(); ++i)
      if ((*buf)[i] == instance) mask.data[i] = 1;
    return mask;
  }

  std::vector<std::string> tag(const FrameRef& frame) override {
    const std::vector<int>* buf = buffer_for(frame.frame_id);
    std::vector<std::string> tags;
    if (buf) {
      std::set<int> present(buf->begin(), buf->end());
      present.erase(0);
      for (int id : present) tags.push_back(label_of_instance_.at(id));
    }
    for (const std::string& d : distractors_) tags.push_back(d);
    return tags;
  }

  std::optional<std::vector<double>> embed_crop(const FrameRef& frame, int prompt_id,
                                                const CropBox& crop) override {
    int instance = 0;
    {
      std::lock_guard<std::mutex> lock(mu_);
      auto it = segmented_instance_.find({frame.frame_id, prompt_id});
      if (it != segmented_instance_.end()) instance = it->second;
    }
    if (instance == 0) {
      // Not seen by segment(): fall back to the majority instance in the crop.
      const std::vector<int>* buf = buffer_for(frame.frame_id);
      if (!buf) return std::nullopt;
      std::map<int, int> votes;
      for (int y = crop.y0; y < crop.y1; ++y)
        for (int x = crop.x0; x < crop.x1; ++x) {
          if (x < 0 || x >= width_ || y < 0 || y >= height_) continue;
          int id = (*buf)[static_cast<size_t>(y) * width_ + x];
          if (id > 0) ++votes[id];
        }
      for (const auto& [id, count] : votes)
        if (instance == 0 || count > votes[instance]) instance = id;
      if (instance == 0) return std::nullopt;
    }
    return basis_vector(label_of_instance_.at(instance),
                        "crop:" + std::to_string(frame.frame_id) + ":" + std::to_string(prompt_id));
  }

  Matrix embed_texts(const std::vector<std::string>& texts) override {
    Matrix m(static_cast<int>(texts.size()), dim_);
    for (size_t i = 0; i < texts.size(); ++i) {
      std::vector<double> v = basis_vector(fold_tag(texts[i]), "text:" + fold_tag(texts[i]));
      for (int c = 0; c < dim_; ++c) m(static_cast<int>(i), c) = v[static_cast<size_t>(c)];
    }
    return m;
  }

  int dim() const { return dim_; }

private:
  const std::vector<int>* buffer_for(int frame_id) const {
    auto it = id_buffers_.find(frame_id);
    return it == id_buffers_.end() ? nullptr : &it->second;
  }

  static uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

  std::vector<double> basis_vector(const std::string& folded_tag, const std::string& jitter_key) {
    auto it = basis_.find(folded_tag);
    if (it == basis_.end())
      throw backend_error("oracle backend knows no tag \"" + folded_tag + "\"");
    std::vector<double> v(static_cast<size_t>(dim_), 0.0);
    v[static_cast<size_t>(it->second)] = 1.0;
    if (sigma_e_ > 0) {
      Rng rng(combine_seed(seed_, fnv1a(jitter_key)));
      for (double& x : v) x += sigma_e_ * rng.gaussian();
      normalize_embedding(v, jitter_key);
    }
    return v;
  }

  double sigma_e_ = 0;
  uint64_t seed_ = 0;
  int dim_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::map<std::string, int> basis_;
  std::vector<std::string> label_order_;
  std::vector<std::string> distractors_;
  std::map<int, std::string> label_of_instance_;
  std::map<int, std::vector<int>> id_buffers_;
  std::mutex mu_;
  std::map<std::pair<int, int>, int> segmented_instance_;
};

} // namespace ovlift
