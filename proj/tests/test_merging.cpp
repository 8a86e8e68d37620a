#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "ovlift/ovlift.hpp"

using namespace ovlift;

namespace {

/// Table whose columns are given explicitly (rows = column length).
OverlapScoreTable table_from_columns(const std::vector<std::vector<int>>& cols) {
  OverlapScoreTable t(static_cast<int>(cols[0].size()), static_cast<int>(cols.size()));
  for (int n = 0; n < t.cols; ++n)
    for (int m = 0; m < t.rows; ++m) t.at(m, n) = cols[static_cast<size_t>(n)][static_cast<size_t>(m)];
  return t;
}

std::vector<CoarseMask> masks_for(const OverlapScoreTable& t) {
  std::vector<CoarseMask> cms;
  for (int n = 0; n < t.cols; ++n) {
    CoarseMask cm;
    cm.id = n;
    cm.point_indices = {n * 10, n * 10 + 1}; // disjoint dummy points
    cms.push_back(cm);
  }
  return cms;
}

std::vector<std::vector<int>> groups_of(const MergeResult& r) {
  std::vector<std::vector<int>> g;
  for (const Instance& inst : r.instances) g.push_back(inst.composition);
  return g;
}

OverlapScoreTable random_table(Rng& rng, int max_m = 8, int max_n = 6) {
  int m = 1 + static_cast<int>(rng.uniform_below(static_cast<uint64_t>(max_m)));
  int n = 1 + static_cast<int>(rng.uniform_below(static_cast<uint64_t>(max_n)));
  OverlapScoreTable t(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      if (rng.uniform() < 0.6) t.at(i, j) = static_cast<int>(rng.uniform_below(6));
  return t;
}

} // namespace

TEST_CASE("similarity scores are column dot products") {
  OverlapScoreTable t = table_from_columns({{1, 2, 0}, {2, 1, 3}, {0, 0, 4}});
  auto ts0 = similarity_scores(t, 0);
  CHECK(ts0[1] == 4.0);           // (1,2,0).(2,1,3)
  CHECK(ts0[0] == 5.0);           // self: 1+4+0
  CHECK(ts0[2] == 0.0);           // orthogonal support
  auto ts2 = similarity_scores(t, 2);
  CHECK(ts2[0] == 0.0);
  CHECK(ts2[2] == 16.0);
  CHECK_THROWS_AS(similarity_scores(t, 3), argument_error);
}

TEST_CASE("merge threshold") {
  SECTION("zero column floors at one") {
    CHECK(merge_threshold({0, 0, 0}, 0.45, ColumnNorm::L1) == 1.0);
  }
  SECTION("L1 norm 9 at tau 0.45 gives 20") {
    CHECK(merge_threshold({9, 0, 0}, 0.45, ColumnNorm::L1) == Catch::Approx(20.0));
    CHECK(merge_threshold({4, 3, 2}, 0.45, ColumnNorm::L1) == Catch::Approx(20.0));
  }
  SECTION("small norms floor at one") {
    CHECK(merge_threshold({0.4}, 0.45, ColumnNorm::L1) == 1.0);
  }
  SECTION("norm variants") {
    CHECK(merge_threshold({3, 4, 0}, 0.5, ColumnNorm::L2) == Catch::Approx(10.0));
    CHECK(merge_threshold({3, 4, 0}, 0.5, ColumnNorm::NonzeroCount) == Catch::Approx(4.0));
  }
  SECTION("tau must be positive") {
    CHECK_THROWS_AS(merge_threshold({1.0}, 0.0, ColumnNorm::L1), argument_error);
  }
}

TEST_CASE("column norm parsing") {
  CHECK(parse_column_norm("L1") == ColumnNorm::L1);
  CHECK(parse_column_norm("l2") == ColumnNorm::L2);
  CHECK(parse_column_norm("nonzero-count") == ColumnNorm::NonzeroCount);
  CHECK(column_norm_name(ColumnNorm::L2) == "L2");
  CHECK_THROWS_AS(parse_column_norm("manhattan"), config_error);
}

TEST_CASE("identical large columns merge into one instance") {
  OverlapScoreTable t = table_from_columns({{5, 5, 5, 5}, {5, 5, 5, 5}});
  MergeConfig cfg;
  // dot = 100, threshold = 20/0.45 = 44.4
  MergeResult r = merge_coarse_masks(t, masks_for(t), cfg);
  REQUIRE(r.instances.size() == 1);
  CHECK(r.instances[0].composition == std::vector<int>{0, 1});
  CHECK(r.instances[0].point_indices == std::vector<int>{0, 1, 10, 11});
  CHECK(r.final_columns[0] == std::vector<double>{10, 10, 10, 10});
  CHECK(groups_of(r) == testref::exhaustive_merge_groups(t, {0, 1}, cfg));
}

TEST_CASE("orthogonal columns never merge") {
  OverlapScoreTable t = table_from_columns({{7, 7, 0, 0}, {0, 0, 7, 7}});
  MergeConfig cfg;
  MergeResult r = merge_coarse_masks(t, masks_for(t), cfg);
  REQUIRE(r.instances.size() == 2);
  CHECK(r.instances[0].composition == std::vector<int>{0});
  CHECK(r.instances[1].composition == std::vector<int>{1});
  CHECK(r.instances[0].id == 0);
  CHECK(r.instances[1].id == 1);
  CHECK(groups_of(r) == testref::exhaustive_merge_groups(t, {0, 1}, cfg));
}

TEST_CASE("chain merge needs the column update") {
  // A~B and B~C above threshold, A~C below: only the updatable strategy
  // unifies all three.
  OverlapScoreTable t = table_from_columns({{9, 9, 0, 0}, {9, 9, 9, 9}, {0, 0, 9, 9}});
  MergeConfig cfg; // tau 0.45, L1

  // Sanity of the construction: A.B=162 > |A|/tau=40; B.C=162 > |B|/tau=80;
  // A.C=0 below everything.
  auto ts0 = similarity_scores(t, 0);
  CHECK(ts0[1] == 162.0);
  CHECK(ts0[2] == 0.0);
  CHECK(merge_threshold({9, 9, 0, 0}, cfg.tau, cfg.column_norm) == Catch::Approx(40.0));

  MergeResult r = merge_coarse_masks(t, masks_for(t), cfg);
  REQUIRE(r.instances.size() == 1);
  CHECK(r.instances[0].composition == std::vector<int>{0, 1, 2});
  CHECK(groups_of(r) == testref::exhaustive_merge_groups(t, {0, 1, 2}, cfg));

  // The frozen-column variant stops after A absorbs B: A's original column is
  // orthogonal to C, and B never gets to act as an anchor.
  auto naive = testref::snapshot_merge_groups(t, {0, 1, 2}, cfg);
  REQUIRE(naive.size() == 2);
  CHECK(naive[0] == std::vector<int>{0, 1});
  CHECK(naive[1] == std::vector<int>{2});
}

TEST_CASE("merging reaches a fixpoint on random tables") {
  Rng rng(99);
  MergeConfig cfg;
  for (int trial = 0; trial < 100; ++trial) {
    cfg.column_norm = (trial % 3 == 0)   ? ColumnNorm::L1
                      : (trial % 3 == 1) ? ColumnNorm::L2
                                         : ColumnNorm::NonzeroCount;
    OverlapScoreTable t = random_table(rng);
    auto cms = masks_for(t);
    MergeResult r = merge_coarse_masks(t, cms, cfg);

    CHECK(merge_fixpoint_holds(r, cfg));
    CHECK(testref::no_pair_above_threshold(r, cfg.tau, cfg.column_norm));

    std::vector<int> ids;
    for (const auto& cm : cms) ids.push_back(cm.id);
    CHECK(testref::compositions_partition(r.instances, ids));

    // ids renumbered 0..K-1; points disjoint
    std::set<int> seen;
    for (size_t k = 0; k < r.instances.size(); ++k) {
      CHECK(r.instances[k].id == static_cast<int>(k));
      for (int p : r.instances[k].point_indices) {
        CHECK(seen.count(p) == 0);
        seen.insert(p);
      }
    }
    CHECK(r.passes <= std::max(1, t.cols));
  }
}

TEST_CASE("merging is deterministic") {
  Rng rng(123);
  OverlapScoreTable t = random_table(rng, 10, 8);
  MergeConfig cfg;
  MergeResult a = merge_coarse_masks(t, masks_for(t), cfg);
  MergeResult b = merge_coarse_masks(t, masks_for(t), cfg);
  CHECK(groups_of(a) == groups_of(b));
  CHECK(a.final_columns == b.final_columns);
}

TEST_CASE("max_passes caps the pass loop") {
  OverlapScoreTable t = table_from_columns({{9, 9, 0, 0}, {9, 9, 9, 9}, {0, 0, 9, 9}});
  MergeConfig one_pass;
  one_pass.max_passes = 1;
  MergeResult r = merge_coarse_masks(t, masks_for(t), one_pass);
  // the chain completes within one pass because the anchor keeps scanning
  // with its updated column
  CHECK(r.instances.size() == 1);
  CHECK(r.passes == 1);

  MergeConfig free_run;
  MergeResult full = merge_coarse_masks(t, masks_for(t), free_run);
  CHECK(full.passes == 2); // one merging pass + one empty confirming pass
}

TEST_CASE("merge rejects misaligned coarse masks") {
  OverlapScoreTable t(2, 1);
  CoarseMask cm;
  cm.id = 5;
  CHECK_THROWS_AS(merge_coarse_masks(t, {cm}, MergeConfig{}), argument_error);
}

TEST_CASE("instance export files") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "ovlift_inst";
  fs::create_directories(dir);

  Instance a;
  a.id = 0;
  a.point_indices = {0, 2};
  a.composition = {1, 3};
  a.label = "chair";
  a.confidence = 0.9;
  Instance b;
  b.id = 1;
  b.point_indices = {4};
  b.composition = {0};

  write_instances_json((dir / "instances.json").string(), {a, b});
  std::ifstream in(dir / "instances.json");
  nlohmann::json j = nlohmann::json::parse(in);
  REQUIRE(j.is_array());
  REQUIRE(j.size() == 2);
  CHECK(j[0]["id"] == 0);
  CHECK(j[0]["composition"] == nlohmann::json({1, 3}));
  CHECK(j[0]["point_count"] == 2);
  CHECK(j[0]["label"] == "chair");
  CHECK(j[0]["confidence"] == Catch::Approx(0.9));
  CHECK(j[1].contains("label") == false);
  CHECK(j[1].contains("confidence") == false);

  write_instance_ids((dir / "ids.txt").string(), 6, {a, b});
  std::ifstream ids_in(dir / "ids.txt");
  std::vector<int> ids;
  int v;
  while (ids_in >> v) ids.push_back(v);
  CHECK(ids == std::vector<int>{0, -1, 0, -1, 1, -1});
  fs::remove_all(dir);
}
