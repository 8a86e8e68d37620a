#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "ovlift/ovlift.hpp"

using namespace ovlift;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("ovlift_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

Scene tiny_scene(int n_frames = 2) {
  Scene s;
  s.points = {{0, 0, 2}, {0.5, 0, 2}, {0, 0.5, 2}, {0.5, 0.5, 2}};
  s.colors = {{10, 20, 30}, {40, 50, 60}, {70, 80, 90}, {100, 110, 120}};
  for (int i = 0; i < n_frames; ++i) {
    PosedFrame f;
    f.frame_id = i;
    f.intrinsics = {40.0, 40.0, 16.0, 12.0, 32, 24};
    f.world_to_cam.translation = {0, 0, 0.1 * i};
    f.depth = DepthMap(32, 24);
    f.depth.at(3, 4) = 1.25f;
    s.frames.push_back(std::move(f));
  }
  return s;
}

} // namespace

TEST_CASE("ply round trip keeps points and colors") {
  TempDir t("ply");
  std::vector<Vec3> pts = {{0, 1, 2}, {-1.5, 0.25, 3.75}};
  std::vector<std::array<uint8_t, 3>> cols = {{255, 0, 0}, {0, 128, 255}};
  write_ply(t.str() + "/c.ply", pts, cols);
  PlyCloud back = read_ply(t.str() + "/c.ply");
  REQUIRE(back.points.size() == 2);
  CHECK(norm(back.points[1] - pts[1]) < 1e-6);
  REQUIRE(back.colors.size() == 2);
  CHECK(back.colors[1] == cols[1]);
}

TEST_CASE("ascii ply is accepted") {
  TempDir t("ply_ascii");
  std::ofstream out(t.str() + "/a.ply");
  out << "ply\nformat ascii 1.0\nelement vertex 2\n"
      << "property float x\nproperty float y\nproperty float z\n"
      << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
      << "end_header\n"
      << "0 0 1 255 0 0\n"
      << "1 2 3 0 255 0\n";
  out.close();
  PlyCloud c = read_ply(t.str() + "/a.ply");
  REQUIRE(c.points.size() == 2);
  CHECK(c.points[1] == Vec3{1, 2, 3});
  CHECK(c.colors[0][0] == 255);
}

TEST_CASE("depth png round trips at millimeter resolution") {
  TempDir t("depth");
  DepthMap d(5, 3);
  d.at(0, 0) = 0.0f;    // invalid stays invalid
  d.at(1, 0) = 1.234f;  // 1234 mm
  d.at(4, 2) = 0.0005f; // rounds to 1 mm? 0.5 -> round half up
  write_depth_png(t.str() + "/d.png", d);
  DepthMap back = read_depth_png(t.str() + "/d.png");
  CHECK(back.width == 5);
  CHECK(back.height == 3);
  CHECK(back.at(0, 0) == 0.0f);
  CHECK(back.at(1, 0) == Catch::Approx(1.234).margin(5e-4));
}

TEST_CASE("pose file stores camera-to-world but load returns world-to-camera") {
  TempDir t("pose");
  RigidTransform w2c{axis_angle(Vec3{0, 1, 0}, 0.3), Vec3{0.5, -1.0, 2.0}};
  write_pose_file(t.str() + "/p.txt", w2c);

  // the file itself holds the inverse (camera-to-world)
  std::ifstream in(t.str() + "/p.txt");
  double v[16];
  for (double& x : v) in >> x;
  REQUIRE(!in.fail());
  in.close();
  RigidTransform c2w = w2c.inverse();
  CHECK(v[3] == Catch::Approx(c2w.translation.x).margin(1e-12));
  CHECK(v[7] == Catch::Approx(c2w.translation.y).margin(1e-12));
  CHECK(v[11] == Catch::Approx(c2w.translation.z).margin(1e-12));
  CHECK(v[15] == 1.0);

  RigidTransform back = read_pose_file(t.str() + "/p.txt");
  Vec3 p{0.1, 0.2, 0.3};
  CHECK(norm(back.apply(p) - w2c.apply(p)) < 1e-9);
}

TEST_CASE("pose file with bad last row is rejected") {
  TempDir t("pose_bad");
  std::ofstream out(t.str() + "/p.txt");
  out << "1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 1 1\n";
  out.close();
  CHECK_THROWS_AS(read_pose_file(t.str() + "/p.txt"), consistency_error);
}

TEST_CASE("scene save and load round trip") {
  TempDir t("scene_rt");
  Scene s = tiny_scene();
  save_scene(s, t.str());
  Scene back = load_scene(t.str());
  REQUIRE(back.points.size() == s.points.size());
  CHECK(norm(back.points[2] - s.points[2]) < 1e-6);
  REQUIRE(back.colors.size() == s.colors.size());
  CHECK(back.colors[3] == s.colors[3]);
  REQUIRE(back.frames.size() == 2);
  CHECK(back.frames[1].frame_id == 1);
  CHECK(back.frames[1].intrinsics.width == 32);
  CHECK(back.frames[0].depth.at(3, 4) == Catch::Approx(1.25).margin(5e-4));
  Vec3 p{0.3, -0.2, 1.0};
  CHECK(norm(back.frames[1].world_to_cam.apply(p) - s.frames[1].world_to_cam.apply(p)) < 1e-9);
}

TEST_CASE("load errors name the offending frame") {
  TempDir t("scene_err");
  Scene s = tiny_scene();
  save_scene(s, t.str());

  SECTION("missing depth file") {
    fs::remove(t.path / "depth" / "0.png");
    CHECK_THROWS_WITH(load_scene(t.str()), Catch::Matchers::ContainsSubstring("frame 0"));
  }
  SECTION("missing pose file") {
    fs::remove(t.path / "poses" / "1.txt");
    CHECK_THROWS_AS(load_scene(t.str()), consistency_error);
    try {
      load_scene(t.str());
    } catch (const consistency_error& e) {
      CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
  }
  SECTION("frames are ordered by id even when the manifest is shuffled") {
    std::ofstream out(t.path / "frames.txt");
    out << "1\n0\n";
    out.close();
    Scene back = load_scene(t.str());
    CHECK(back.frames[0].frame_id == 0);
    CHECK(back.frames[1].frame_id == 1);
  }
}

TEST_CASE("frame sampling") {
  std::vector<PosedFrame> frames(25);
  for (int i = 0; i < 25; ++i) frames[static_cast<size_t>(i)].frame_id = i;

  SECTION("stride 10 keeps indices 0, 10, 20") {
    auto out = sample_frames(frames, 10);
    REQUIRE(out.size() == 3);
    CHECK(out[0].frame_id == 0);
    CHECK(out[1].frame_id == 10);
    CHECK(out[2].frame_id == 20);
  }
  SECTION("stride 1 is the identity") {
    CHECK(sample_frames(frames, 1).size() == 25);
  }
  SECTION("stride larger than the sequence keeps the first frame") {
    std::vector<PosedFrame> five(frames.begin(), frames.begin() + 5);
    auto out = sample_frames(five, 100);
    REQUIRE(out.size() == 1);
    CHECK(out[0].frame_id == 0);
  }
  SECTION("stride zero is an error") {
    CHECK_THROWS_AS(sample_frames(frames, 0), argument_error);
  }
  SECTION("sampling composes multiplicatively") {
    auto ab = sample_frames(sample_frames(frames, 2), 3);
    auto direct = sample_frames(frames, 6);
    REQUIRE(ab.size() == direct.size());
    for (size_t i = 0; i < ab.size(); ++i) CHECK(ab[i].frame_id == direct[i].frame_id);
  }
}

TEST_CASE("instances from boxes") {
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({0.1 * i, 0, 0}); // x in [0, 0.9]
  pts.push_back({5, 5, 5});                                    // stray

  OrientedBox big;
  big.center = {0.45, 0, 0};
  big.half_extents = {0.5, 1, 1};
  big.label = "table";
  OrientedBox small;
  small.center = {0.1, 0, 0};
  small.half_extents = {0.15, 1, 1};
  small.label = "book";

  SECTION("nested point goes to the smaller box") {
    GroundTruth gt = assign_instances_from_boxes(pts, {big, small}, 1);
    CHECK(gt.instance_ids[0] == 2); // x=0.0 inside both, small wins
    CHECK(gt.instance_ids[1] == 2);
    CHECK(gt.instance_ids[2] == 2); // x=0.2 within 0.1 +/- 0.15
    CHECK(gt.instance_ids[3] == 1); // only big
    CHECK(gt.instance_ids[9] == 1);
    CHECK(gt.instance_ids[10] == 0); // stray stays unannotated
    CHECK(gt.labels.at(1) == "table");
    CHECK(gt.labels.at(2) == "book");
  }

  SECTION("boxes below min_points are dropped entirely") {
    GroundTruth gt = assign_instances_from_boxes(pts, {big, small}, 5);
    // small contains only x = 0.0, 0.1, 0.2 -> 3 raw points < 5 -> dropped
    CHECK(gt.instance_ids[0] == 1);
    CHECK(gt.labels.count(2) == 0);
  }

  SECTION("volume tie goes to the lower box index") {
    OrientedBox twin = small;
    twin.label = "mug";
    GroundTruth gt = assign_instances_from_boxes(pts, {small, twin}, 1);
    CHECK(gt.instance_ids[0] == 1);
  }
}

TEST_CASE("boxes json round trip") {
  TempDir t("boxes");
  OrientedBox b;
  b.center = {1, 2, 3};
  b.half_extents = {0.5, 0.25, 0.75};
  b.rotation = axis_angle(Vec3{0, 0, 1}, 0.25);
  b.label = "sofa";
  write_boxes_json(t.str() + "/gt_boxes.json", {b});
  auto back = read_boxes_json(t.str() + "/gt_boxes.json");
  REQUIRE(back.size() == 1);
  CHECK(back[0].label == "sofa");
  CHECK(norm(back[0].center - b.center) < 1e-9);
  Vec3 probe{0.2, -0.7, 0.4};
  CHECK(norm(back[0].rotation * probe - b.rotation * probe) < 1e-9);
}

TEST_CASE("ground truth files round trip and loading prefers per-point data") {
  TempDir t("gt");
  Scene s = tiny_scene();
  save_scene(s, t.str());

  GroundTruth gt;
  gt.instance_ids = {1, 1, 0, 2};
  gt.labels = {{1, "chair"}, {2, "lamp"}};
  gt.category_group = {{"chair", "furniture"}};
  write_ground_truth(t.str(), gt);

  GroundTruth back = read_ground_truth(t.str());
  CHECK(back.instance_ids == gt.instance_ids);
  CHECK(back.labels == gt.labels);
  CHECK(back.category_group == gt.category_group);

  // Per-point files win even if gt_boxes.json also exists.
  OrientedBox decoy;
  decoy.center = {0, 0, 2};
  decoy.half_extents = {10, 10, 10};
  decoy.label = "decoy";
  write_boxes_json(t.str() + "/gt_boxes.json", {decoy});
  GroundTruth loaded = load_scene_ground_truth(t.str(), s.points, 1);
  CHECK(loaded.instance_ids == gt.instance_ids);
  CHECK(loaded.labels.at(2) == "lamp");
}

TEST_CASE("ground truth falls back to boxes, then errors") {
  TempDir t("gt_fall");
  Scene s = tiny_scene();
  save_scene(s, t.str());

  SECTION("boxes only") {
    OrientedBox b;
    b.center = {0.25, 0.25, 2};
    b.half_extents = {1, 1, 1};
    b.label = "crate";
    write_boxes_json(t.str() + "/gt_boxes.json", {b});
    GroundTruth gt = load_scene_ground_truth(t.str(), s.points, 1);
    CHECK(gt.instance_ids == std::vector<int>{1, 1, 1, 1});
    CHECK(gt.labels.at(1) == "crate");
  }
  SECTION("nothing present") {
    CHECK_THROWS_AS(load_scene_ground_truth(t.str(), s.points, 1), io_error);
  }
}
