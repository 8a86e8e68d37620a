#include <catch2/catch_amalgamated.hpp>

#include "ovlift/ovlift.hpp"

using namespace ovlift;

namespace {

PosedFrame simple_frame(int w = 64, int h = 48) {
  PosedFrame f;
  f.frame_id = 0;
  f.intrinsics = {50.0, 50.0, w / 2.0, h / 2.0, w, h};
  f.depth = DepthMap(w, h);
  return f;
}

} // namespace

TEST_CASE("depth map storage") {
  DepthMap d(3, 2);
  d.at(2, 1) = 1.5f;
  CHECK(d.at(2, 1) == 1.5f);
  CHECK(d.at(0, 0) == 0.0f);
  CHECK(d.width == 3);
  CHECK(d.height == 2);
}

TEST_CASE("frame validation") {
  CHECK_NOTHROW(validate_frame(simple_frame()));

  SECTION("bad focal") {
    PosedFrame f = simple_frame();
    f.intrinsics.fx = 0.0;
    CHECK_THROWS_AS(validate_frame(f), consistency_error);
  }
  SECTION("principal point outside image") {
    PosedFrame f = simple_frame();
    f.intrinsics.cx = 64.0;
    CHECK_THROWS_AS(validate_frame(f), consistency_error);
  }
  SECTION("non-rotation pose") {
    PosedFrame f = simple_frame();
    f.world_to_cam.rotation(0, 0) = 2.0;
    CHECK_THROWS_AS(validate_frame(f), consistency_error);
  }
  SECTION("reflection is rejected") {
    PosedFrame f = simple_frame();
    f.world_to_cam.rotation(0, 0) = -1.0; // det -1, still orthonormal
    CHECK_THROWS_AS(validate_frame(f), consistency_error);
  }
  SECTION("depth dims must match intrinsics") {
    PosedFrame f = simple_frame();
    f.depth = DepthMap(10, 10);
    CHECK_THROWS_AS(validate_frame(f), consistency_error);
  }
  SECTION("negative depth rejected") {
    PosedFrame f = simple_frame();
    f.depth.at(1, 1) = -0.5f;
    CHECK_THROWS_AS(validate_frame(f), consistency_error);
  }
}

TEST_CASE("scene validation") {
  Scene s;
  s.points = {{0, 0, 1}, {1, 0, 1}, {0, 1, 1}};
  s.frames.push_back(simple_frame());
  CHECK_NOTHROW(validate_scene(s));

  SECTION("empty scene") {
    Scene e;
    CHECK_THROWS_AS(validate_scene(e), consistency_error);
  }
  SECTION("color count mismatch") {
    s.colors = {{255, 0, 0}};
    CHECK_THROWS_AS(validate_scene(s), consistency_error);
  }
  SECTION("colors allowed when per-point") {
    s.colors = {{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
    CHECK_NOTHROW(validate_scene(s));
  }
  SECTION("mesh edge bounds") {
    s.mesh_edges = {{0, 3}};
    CHECK_THROWS_AS(validate_scene(s), consistency_error);
  }
  SECTION("self loop") {
    s.mesh_edges = {{1, 1}};
    CHECK_THROWS_AS(validate_scene(s), consistency_error);
  }
  SECTION("non-finite point") {
    s.points[1].y = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(validate_scene(s), consistency_error);
  }
}

TEST_CASE("ground truth validation") {
  GroundTruth gt;
  gt.instance_ids = {0, 1, 1, 2};
  gt.labels = {{1, "chair"}, {2, "table"}};
  CHECK_NOTHROW(validate_ground_truth(gt));

  gt.labels.erase(2);
  CHECK_THROWS_AS(validate_ground_truth(gt), consistency_error); // id 2 unlabeled
}

TEST_CASE("oriented box containment and volume") {
  OrientedBox b;
  b.center = {1, 0, 0};
  b.half_extents = {1, 2, 3};
  b.label = "crate";
  CHECK(b.volume() == 48.0);
  CHECK(b.contains({1, 0, 0}));
  CHECK(b.contains({1.9, -1.9, 2.9}));
  CHECK_FALSE(b.contains({2.1, 0, 0}));

  SECTION("rotation moves the box frame") {
    OrientedBox r = b;
    r.center = {0, 0, 0};
    r.half_extents = {2, 0.1, 0.1};
    r.rotation = axis_angle(Vec3{0, 0, 1}, 3.14159265358979323846 / 2.0);
    // long axis now along +y
    CHECK(r.contains({0, 1.5, 0}));
    CHECK_FALSE(r.contains({1.5, 0, 0}));
  }

  SECTION("validation") {
    CHECK_NOTHROW(validate_box(b));
    OrientedBox bad = b;
    bad.half_extents.z = 0.0;
    CHECK_THROWS_AS(validate_box(bad), consistency_error);
    OrientedBox skew = b;
    skew.rotation(0, 1) = 0.5;
    CHECK_THROWS_AS(validate_box(skew), consistency_error);
  }
}
