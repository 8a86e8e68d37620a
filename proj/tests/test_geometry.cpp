#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "ovlift/ovlift.hpp"

using namespace ovlift;

namespace {

PosedFrame identity_frame(double fx, double fy, double cx, double cy, int w, int h) {
  PosedFrame f;
  f.frame_id = 0;
  f.intrinsics = {fx, fy, cx, cy, w, h};
  f.depth = DepthMap(w, h);
  return f;
}

} // namespace

TEST_CASE("pinhole projection basics") {
  PosedFrame f = identity_frame(100, 100, 50, 50, 100, 100);

  SECTION("principal point") {
    auto px = project_point({0, 0, 2}, f);
    REQUIRE(px.has_value());
    CHECK(px->u == Catch::Approx(50.0));
    CHECK(px->v == Catch::Approx(50.0));
    CHECK(px->z == Catch::Approx(2.0));
  }
  SECTION("behind the camera is absent") {
    CHECK_FALSE(project_point({0, 0, -1}, f).has_value());
    CHECK_FALSE(project_point({0, 0, 0}, f).has_value());
  }
  SECTION("off-axis arithmetic: u = fx x/z + cx") {
    PosedFrame wide = identity_frame(100, 100, 50, 50, 200, 100);
    auto px = project_point({1, 0, 2}, wide);
    REQUIRE(px.has_value());
    CHECK(px->u == Catch::Approx(100.0));
    // the same point is out of the 100-wide frame: [0, w) is half-open
    CHECK_FALSE(project_point({1, 0, 2}, f).has_value());
  }
  SECTION("pose moves the point into view") {
    PosedFrame moved = identity_frame(100, 100, 50, 50, 100, 100);
    moved.world_to_cam.translation = {0, 0, 3};
    auto px = project_point({0, 0, -1}, moved);
    REQUIRE(px.has_value());
    CHECK(px->z == Catch::Approx(2.0));
  }
}

TEST_CASE("projection matches the homogeneous-matrix oracle") {
  Rng rng(101);
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    PosedFrame f = identity_frame(rng.uniform_in(50, 500), rng.uniform_in(50, 500),
                                  rng.uniform_in(0, 639), rng.uniform_in(0, 479), 640, 480);
    Vec3 axis = normalized(
        Vec3{rng.uniform_in(-1, 1), rng.uniform_in(-1, 1), rng.uniform_in(-1, 1) + 2.0});
    f.world_to_cam.rotation = axis_angle(axis, rng.uniform_in(-3, 3));
    f.world_to_cam.translation = {rng.uniform_in(-2, 2), rng.uniform_in(-2, 2),
                                  rng.uniform_in(-2, 2)};
    Vec3 p{rng.uniform_in(-4, 4), rng.uniform_in(-4, 4), rng.uniform_in(-4, 4)};

    auto got = project_point(p, f);
    auto want = testref::project_homogeneous(p, f);
    REQUIRE(got.has_value() == want.ok);
    if (got) {
      CHECK(std::abs(got->u - want.u) <= 1e-6);
      CHECK(std::abs(got->v - want.v) <= 1e-6);
      CHECK(std::abs(got->z - want.z) <= 1e-6);
      ++checked;
    }
  }
  CHECK(checked > 100); // the sample must actually exercise the in-view path
}

TEST_CASE("pixel rounding is half-up") {
  CHECK(round_pixel(1.4) == 1);
  CHECK(round_pixel(1.5) == 2);
  CHECK(round_pixel(-0.4) == 0);
  CHECK(round_pixel(-0.5) == 0);
  CHECK(round_pixel(-0.51) == -1);
}

TEST_CASE("depth visibility") {
  PosedFrame f = identity_frame(100, 100, 50, 50, 100, 100);
  std::vector<Vec3> pts = {
      {0, 0, 2},    // exact depth match
      {0.3, 0, 3},  // occluded: lands on (60,50) where depth says 1.5
      {3, 3, 2},    // projects outside
      {0, 0.2, 2},  // depth invalid (0) at its pixel
  };
  f.depth.at(50, 50) = 2.0f;
  f.depth.at(60, 50) = 1.5f;

  SECTION("rules") {
    auto vis = visible_points({0, 1, 2, 3}, pts, f, 0.05);
    CHECK(vis == std::vector<int>{0});
  }
  SECTION("subset and monotone in eps") {
    auto tight = visible_points({0, 1, 2, 3}, pts, f, 0.01);
    auto loose = visible_points({0, 1, 2, 3}, pts, f, 2.0);
    for (int i : tight) CHECK(std::find(loose.begin(), loose.end(), i) != loose.end());
    CHECK(loose == std::vector<int>{0, 1}); // 2m slack admits the occluded point
  }
  SECTION("eps must be positive") {
    CHECK_THROWS_AS(visible_points({0}, pts, f, 0.0), argument_error);
  }
}

TEST_CASE("view ranking") {
  // one point; three frames whose depth maps make it visible a controlled
  // number of times via distinct prompt points
  std::vector<Vec3> pts;
  for (int i = 0; i < 50; ++i) pts.push_back({0.01 * i - 0.25, 0, 2});
  std::vector<int> all(50);
  std::iota(all.begin(), all.end(), 0);

  auto make_frame = [&](int id, int n_visible) {
    PosedFrame f = identity_frame(100, 100, 50, 50, 100, 100);
    f.frame_id = id;
    int made = 0;
    for (int i = 0; i < 50 && made < n_visible; ++i, ++made) {
      auto px = project_point(pts[static_cast<size_t>(i)], f);
      REQUIRE(px.has_value());
      f.depth.at(round_pixel(px->u), round_pixel(px->v)) = static_cast<float>(px->z);
    }
    return f;
  };

  SECTION("counts {10, 50, 30}, T=2 keeps the two best") {
    std::vector<PosedFrame> frames = {make_frame(0, 10), make_frame(1, 50), make_frame(2, 30)};
    auto ranked = rank_views(all, pts, frames, 2, 0.05);
    REQUIRE(ranked.size() == 2);
    CHECK(ranked[0].frame_id == 1);
    CHECK(ranked[0].visible_count == 50);
    CHECK(ranked[1].frame_id == 2);
    CHECK(ranked[1].visible_count == 30);
    CHECK(ranked[0].visible_count >= ranked[1].visible_count);
  }
  SECTION("all zero counts give an empty ranking") {
    std::vector<PosedFrame> frames = {make_frame(0, 0), make_frame(1, 0)};
    CHECK(rank_views(all, pts, frames, 3, 0.05).empty());
  }
  SECTION("tie goes to the lower frame id") {
    std::vector<PosedFrame> frames = {make_frame(7, 10), make_frame(3, 10)};
    auto ranked = rank_views(all, pts, frames, 1, 0.05);
    REQUIRE(ranked.size() == 1);
    CHECK(ranked[0].frame_id == 3);
  }
  SECTION("T of one truncates") {
    std::vector<PosedFrame> frames = {make_frame(0, 10), make_frame(1, 50)};
    auto ranked = rank_views(all, pts, frames, 1, 0.05);
    REQUIRE(ranked.size() == 1);
    CHECK(ranked[0].frame_id == 1);
  }
}

TEST_CASE("pixel prompt sampling") {
  SECTION("k at least n returns the input as-is") {
    std::vector<PixelPoint> px = {{9, 0, 1}, {1, 0, 1}, {5, 0, 1}};
    auto out = sample_pixel_prompts(px, 5);
    REQUIRE(out.size() == 3);
    CHECK(out[0].u == 9);
    CHECK(out[1].u == 1);
    CHECK(out[2].u == 5);
  }
  SECTION("collinear u in {0,5,10} with k=2 picks centroid seed then farthest") {
    std::vector<PixelPoint> px = {{0, 0, 1}, {5, 0, 1}, {10, 0, 1}};
    auto out = sample_pixel_prompts(px, 2);
    REQUIRE(out.size() == 2);
    CHECK(out[0].u == 5.0); // centroid (5,0) -> exact hit
    CHECK(out[1].u == 0.0); // 0 and 10 tie at distance 5; lower index wins
  }
  SECTION("k=1 is the centroid-nearest pixel") {
    std::vector<PixelPoint> px = {{0, 0, 1}, {4, 0, 1}, {10, 0, 1}};
    auto out = sample_pixel_prompts(px, 1);
    REQUIRE(out.size() == 1);
    CHECK(out[0].u == 4.0); // centroid u = 14/3 = 4.67, nearest is 4
  }
  SECTION("empty input and bad k are errors") {
    CHECK_THROWS_AS(sample_pixel_prompts({}, 3), argument_error);
    std::vector<PixelPoint> px = {{0, 0, 1}};
    CHECK_THROWS_AS(sample_pixel_prompts(px, 0), argument_error);
  }
  SECTION("agrees with exhaustive FPS enumeration on random sets") {
    Rng rng(77);
    for (int trial = 0; trial < 40; ++trial) {
      size_t n = 2 + rng.uniform_below(30);
      std::vector<PixelPoint> px;
      for (size_t i = 0; i < n; ++i)
        px.push_back({rng.uniform_in(0, 100), rng.uniform_in(0, 100), 1.0});
      int k = 1 + static_cast<int>(rng.uniform_below(n + 2));
      auto got = sample_pixel_prompts(px, k);
      auto want_idx = testref::fps_indices(px, static_cast<size_t>(k));
      REQUIRE(got.size() == want_idx.size());
      for (size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].u == px[want_idx[i]].u);
        CHECK(got[i].v == px[want_idx[i]].v);
      }
    }
  }
}

TEST_CASE("mask back-projection") {
  // a 5x5 grid plane at z=2, fully visible
  PosedFrame f = identity_frame(100, 100, 50, 50, 100, 100);
  std::vector<Vec3> pts;
  for (int y = -2; y <= 2; ++y)
    for (int x = -2; x <= 2; ++x) pts.push_back({0.2 * x, 0.2 * y, 2});
  for (const Vec3& p : pts) {
    auto px = project_point(p, f);
    REQUIRE(px.has_value());
    f.depth.at(round_pixel(px->u), round_pixel(px->v)) = static_cast<float>(px->z);
  }

  SECTION("full mask returns every plane point") {
    Mask2D mask(100, 100);
    for (int y = 0; y < 100; ++y)
      for (int x = 0; x < 100; ++x) mask.set(x, y, true);
    BackProjection bp = back_project_mask(f, mask, pts, 0.05);
    REQUIRE(bp.point_indices.size() == pts.size());
    CHECK(std::is_sorted(bp.point_indices.begin(), bp.point_indices.end()));
    CHECK(bp.view_id == f.frame_id);
  }
  SECTION("empty mask returns nothing") {
    Mask2D mask(100, 100);
    CHECK(back_project_mask(f, mask, pts, 0.05).point_indices.empty());
  }
  SECTION("occlusion excludes points behind the depth") {
    PosedFrame occ = f;
    // pretend something sits at z=1 in front of the left half
    for (int y = 0; y < 100; ++y)
      for (int x = 0; x < 50; ++x)
        if (occ.depth.at(x, y) > 0) occ.depth.at(x, y) = 1.0f;
    Mask2D mask(100, 100);
    for (int y = 0; y < 100; ++y)
      for (int x = 0; x < 100; ++x) mask.set(x, y, true);
    BackProjection bp = back_project_mask(occ, mask, pts, 0.05);
    CHECK(bp.point_indices.size() < pts.size());
    for (int i : bp.point_indices) {
      auto px = project_point(pts[static_cast<size_t>(i)], occ);
      REQUIRE(px.has_value());
      CHECK(round_pixel(px->u) >= 50);
    }
  }
  SECTION("round trip: every returned point lands on a true mask pixel") {
    Mask2D mask(100, 100);
    for (int y = 30; y < 70; ++y)
      for (int x = 40; x < 90; ++x) mask.set(x, y, true);
    BackProjection bp = back_project_mask(f, mask, pts, 0.05);
    for (int i : bp.point_indices) {
      auto px = project_point(pts[static_cast<size_t>(i)], f);
      REQUIRE(px.has_value());
      CHECK(mask.at(round_pixel(px->u), round_pixel(px->v)));
    }
  }
  SECTION("mask size must match the frame") {
    Mask2D mask(10, 10);
    CHECK_THROWS_AS(back_project_mask(f, mask, pts, 0.05), argument_error);
  }
  SECTION("cached variant is exactly equivalent") {
    Mask2D mask(100, 100);
    for (int y = 0; y < 100; ++y)
      for (int x = 0; x < 100; x += 2) mask.set(x, y, true);
    FrameProjections fp = FrameProjections::build(f, pts, 0.05);
    BackProjection direct = back_project_mask(f, mask, pts, 0.05);
    BackProjection cached = back_project_mask_cached(fp, f.frame_id, mask);
    CHECK(direct.point_indices == cached.point_indices);
    CHECK(cached.view_id == f.frame_id);
  }
}
