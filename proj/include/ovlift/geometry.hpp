#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "ovlift/common.hpp"
#include "ovlift/mask.hpp"
#include "ovlift/math.hpp"
#include "ovlift/scene.hpp"

namespace ovlift {

struct PixelPoint {
  double u = 0.0;
  double v = 0.0;
  double z = 0.0; // camera-space depth, meters
};

struct BackProjection {
  int prompt_id = -1;
  int view_id = -1;
  std::vector<int> point_indices; // ascending, deduplicated
};

/// Nearest integer, half away from zero is not needed here: pixels are >= 0
/// inside the image, so half-up (floor(x + 0.5)) is the rule everywhere.
inline int round_pixel(double x) { return static_cast<int>(std::floor(x + 0.5)); }

inline std::optional<PixelPoint> project_point(const Vec3& p, const PosedFrame& frame) {
  Vec3 cam = frame.world_to_cam.apply(p);
  if (cam.z <= 0.0) return std::nullopt;
  const Intrinsics& k = frame.intrinsics;
  PixelPoint px;
  px.u = k.fx * cam.x / cam.z + k.cx;
  px.v = k.fy * cam.y / cam.z + k.cy;
  px.z = cam.z;
  if (!std::isfinite(px.u) || !std::isfinite(px.v)) return std::nullopt;
  if (px.u < 0.0 || px.u >= static_cast<double>(k.width) || px.v < 0.0 ||
      px.v >= static_cast<double>(k.height))
    return std::nullopt;
  return px;
}

/// Depth-tested projection at the rounded pixel; an invalid (zero) depth
/// sample means unobserved, not visible.
inline bool point_visible(const Vec3& p, const PosedFrame& frame, double eps_depth,
                          PixelPoint* out_px = nullptr) {
  std::optional<PixelPoint> px = project_point(p, frame);
  if (!px) return false;
  int ui = round_pixel(px->u), vi = round_pixel(px->v);
  if (ui < 0 || ui >= frame.depth.width || vi < 0 || vi >= frame.depth.height) return false;
  float d = frame.depth.at(ui, vi);
  if (d <= 0.0f) return false;
  if (std::abs(px->z - static_cast<double>(d)) > eps_depth) return false;
  if (out_px) *out_px = *px;
  return true;
}

inline std::vector<int> visible_points(const std::vector<int>& point_indices,
                                       const std::vector<Vec3>& points, const PosedFrame& frame,
                                       double eps_depth) {
  if (!(eps_depth > 0)) throw argument_error("visible_points: eps_depth must be > 0");
  std::vector<int> out;
  for (int i : point_indices)
    if (point_visible(points[static_cast<size_t>(i)], frame, eps_depth)) out.push_back(i);
  return out;
}

struct RankedView {
  int frame_index = -1; // index into the frames argument
  int frame_id = -1;
  int visible_count = 0;
};

/// Top-T frames by visible prompt points, descending (ties -> lower frame id).
/// Frames that see nothing are excluded, so the result may be empty.
inline std::vector<RankedView> rank_views(const std::vector<int>& prompt_points,
                                          const std::vector<Vec3>& points,
                                          const std::vector<PosedFrame>& frames, int t_views,
                                          double eps_depth) {
  if (t_views < 1) throw argument_error("rank_views: T must be >= 1");
  std::vector<RankedView> ranked;
  for (size_t fi = 0; fi < frames.size(); ++fi) {
    int count = 0;
    for (int i : prompt_points)
      if (point_visible(points[static_cast<size_t>(i)], frames[fi], eps_depth)) ++count;
    if (count > 0) ranked.push_back({static_cast<int>(fi), frames[fi].frame_id, count});
  }
  std::sort(ranked.begin(), ranked.end(), [](const RankedView& a, const RankedView& b) {
    if (a.visible_count != b.visible_count) return a.visible_count > b.visible_count;
    return a.frame_id < b.frame_id;
  });
  if (ranked.size() > static_cast<size_t>(t_views)) ranked.resize(static_cast<size_t>(t_views));
  return ranked;
}

/// Farthest-point sampling in (u,v). Seed = pixel nearest the centroid; each
/// following pick maximizes the distance to the chosen set. All ties -> lower
/// input index, so the result depends only on input order.
inline std::vector<PixelPoint> sample_pixel_prompts(const std::vector<PixelPoint>& pixels, int k) {
  if (pixels.empty()) throw argument_error("sample_pixel_prompts: empty pixel set");
  if (k < 1) throw argument_error("sample_pixel_prompts: k must be >= 1");
  const size_t n = pixels.size();
  if (static_cast<size_t>(k) >= n) return pixels;

  double cu = 0, cv = 0;
  for (const PixelPoint& p : pixels) {
    cu += p.u;
    cv += p.v;
  }
  cu /= static_cast<double>(n);
  cv /= static_cast<double>(n);

  auto d2 = [](double au, double av, double bu, double bv) {
    double du = au - bu, dv = av - bv;
    return du * du + dv * dv;
  };

  size_t seed = 0;
  double best = std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < n; ++i) {
    double d = d2(pixels[i].u, pixels[i].v, cu, cv);
    if (d < best) {
      best = d;
      seed = i;
    }
  }

  std::vector<size_t> chosen{seed};
  std::vector<char> used(n, 0);
  used[seed] = 1;
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  while (chosen.size() < static_cast<size_t>(k)) {
    size_t last = chosen.back();
    size_t pick = n;
    double far = -1.0;
    for (size_t i = 0; i < n; ++i) {
      min_d2[i] = std::min(min_d2[i],
                           d2(pixels[i].u, pixels[i].v, pixels[last].u, pixels[last].v));
      if (!used[i] && min_d2[i] > far) {
        far = min_d2[i];
        pick = i;
      }
    }
    used[pick] = 1;
    chosen.push_back(pick);
  }

  std::vector<PixelPoint> out;
  out.reserve(chosen.size());
  for (size_t i : chosen) out.push_back(pixels[i]);
  return out;
}

/// Realized by forward projection of every scene point: the result is the set
/// of points that project inside the image, land on a true mask pixel after
/// rounding, and pass the depth visibility test. BP is a subset of the scene
/// point set by construction.
inline BackProjection back_project_mask(const PosedFrame& frame, const Mask2D& mask,
                                        const std::vector<Vec3>& scene_points, double eps_depth) {
  if (mask.width != frame.intrinsics.width || mask.height != frame.intrinsics.height)
    throw argument_error("back_project_mask: mask dimensions do not match the frame");
  BackProjection bp;
  bp.view_id = frame.frame_id;
  for (size_t i = 0; i < scene_points.size(); ++i) {
    PixelPoint px;
    if (!point_visible(scene_points[i], frame, eps_depth, &px)) continue;
    int ui = round_pixel(px.u), vi = round_pixel(px.v);
    if (mask.at(ui, vi)) bp.point_indices.push_back(static_cast<int>(i));
  }
  return bp;
}

/// Per-frame projection cache: rounded pixel and camera depth for every scene
/// point, or pixel = -1 when the point projects outside the frustum. Lets the
/// pipeline project each point once per frame instead of once per use.
struct FrameProjections {
  int width = 0;
  int height = 0;
  std::vector<int> pixel;   // v * width + u (rounded), or -1 outside the view
  std::vector<double> u;    // continuous pixel coordinates for projected points
  std::vector<double> v;
  std::vector<double> z;    // camera depth
  std::vector<uint8_t> vis; // passed the eps_depth test

  static FrameProjections build(const PosedFrame& frame, const std::vector<Vec3>& points,
                                double eps_depth) {
    FrameProjections fp;
    fp.width = frame.intrinsics.width;
    fp.height = frame.intrinsics.height;
    fp.pixel.assign(points.size(), -1);
    fp.u.assign(points.size(), 0.0);
    fp.v.assign(points.size(), 0.0);
    fp.z.assign(points.size(), 0.0);
    fp.vis.assign(points.size(), 0);
    for (size_t i = 0; i < points.size(); ++i) {
      std::optional<PixelPoint> px = project_point(points[i], frame);
      if (!px) continue;
      int ui = round_pixel(px->u), vi = round_pixel(px->v);
      if (ui < 0 || ui >= fp.width || vi < 0 || vi >= fp.height) continue;
      fp.pixel[i] = vi * fp.width + ui;
      fp.u[i] = px->u;
      fp.v[i] = px->v;
      fp.z[i] = px->z;
      float d = frame.depth.at(ui, vi);
      if (d > 0.0f && std::abs(px->z - static_cast<double>(d)) <= eps_depth) fp.vis[i] = 1;
    }
    return fp;
  }
};

/// back_project_mask computed from a projection cache; exactly equivalent.
inline BackProjection back_project_mask_cached(const FrameProjections& fp, int frame_id,
                                               const Mask2D& mask) {
  if (mask.width != fp.width || mask.height != fp.height)
    throw argument_error("back_project_mask: mask dimensions do not match the frame");
  BackProjection bp;
  bp.view_id = frame_id;
  for (size_t i = 0; i < fp.pixel.size(); ++i) {
    if (!fp.vis[i]) continue;
    if (mask.data[static_cast<size_t>(fp.pixel[i])]) bp.point_indices.push_back(static_cast<int>(i));
  }
  return bp;
}

} // namespace ovlift
