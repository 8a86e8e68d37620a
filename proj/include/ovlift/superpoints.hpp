#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "ovlift/common.hpp"
#include "ovlift/kdtree.hpp"
#include "ovlift/math.hpp"
#include "ovlift/parallel.hpp"
#include "ovlift/scene.hpp"
#include "ovlift/union_find.hpp"

namespace ovlift {

struct Superpoint {
  int id = -1;
  std::vector<int> point_indices; // ascending
  int size() const { return static_cast<int>(point_indices.size()); }
};

struct WeightedEdge {
  int i = 0;
  int j = 0;
  double weight = 0.0;
};

struct WeightedGraph {
  int n_nodes = 0;
  std::vector<WeightedEdge> edges; // i < j, deduplicated, sorted by (i, j)
};

struct NormalField {
  std::vector<Vec3> normals;
  std::vector<bool> degenerate;
};

/// Per-point unit normals from PCA over the point itself plus its k_nn - 1
/// nearest neighbors. The sign is canonicalized so the component of largest
/// magnitude is positive (first axis wins magnitude ties). Neighborhoods of
/// rank < 2 get the (0,0,1) fallback and a degenerate flag.
inline NormalField estimate_normals(const std::vector<Vec3>& points, int k_nn, int workers = 1) {
  if (k_nn < 3) throw argument_error("estimate_normals: k_nn must be >= 3");
  if (points.size() < static_cast<size_t>(k_nn))
    throw argument_error("estimate_normals: need at least k_nn points");

  KdTree3 tree(points);
  NormalField field;
  field.normals.resize(points.size());
  field.degenerate.assign(points.size(), false);

  parallel_for(points.size(), resolve_workers(workers), [&](size_t i) {
    std::vector<int> hood = tree.knn_of_point(static_cast<int>(i), k_nn - 1);
    hood.push_back(static_cast<int>(i));

    Vec3 mean{0, 0, 0};
    for (int n : hood) mean = mean + points[static_cast<size_t>(n)];
    mean = mean * (1.0 / static_cast<double>(hood.size()));

    Mat3 cov;
    cov.m.fill(0.0);
    for (int n : hood) {
      Vec3 d = points[static_cast<size_t>(n)] - mean;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) cov(r, c) += d[r] * d[c];
    }

    Eigen33 eig = eigen_symmetric33(cov);
    if (eig.values[2] <= 0.0 || eig.values[1] <= eig.values[2] * 1e-9) {
      field.normals[i] = {0, 0, 1};
      field.degenerate[i] = true;
      return;
    }
    Vec3 n = normalized(eig.vectors[0]);
    int axis = 0;
    for (int a = 1; a < 3; ++a)
      if (std::abs(n[a]) > std::abs(n[axis])) axis = a;
    if (n[axis] < 0) n = n * -1.0;
    field.normals[i] = n;
  });
  return field;
}

/// Adjacency from mesh edges when the scene has them, otherwise from
/// symmetric k-NN. Edge weight = 1 - |n_i . n_j|.
inline WeightedGraph build_graph(const Scene& scene, int k_nn, int workers = 1) {
  if (k_nn < 1) throw argument_error("build_graph: k_nn must be >= 1");
  const auto& points = scene.points;
  const int n = static_cast<int>(points.size());

  NormalField field;
  int k_normal = std::max(3, k_nn);
  if (n >= k_normal) {
    field = estimate_normals(points, k_normal, workers);
  } else {
    field.normals.assign(points.size(), Vec3{0, 0, 1});
    field.degenerate.assign(points.size(), true);
  }

  std::vector<std::pair<int, int>> pairs;
  if (!scene.mesh_edges.empty()) {
    for (const auto& [a, b] : scene.mesh_edges) {
      if (a == b) continue;
      pairs.emplace_back(std::min(a, b), std::max(a, b));
    }
  } else if (n > 1) {
    int k = std::min(k_nn, n - 1);
    KdTree3 tree(points);
    std::vector<std::vector<int>> hoods(points.size());
    parallel_for(points.size(), resolve_workers(workers),
                 [&](size_t i) { hoods[i] = tree.knn_of_point(static_cast<int>(i), k); });
    for (int i = 0; i < n; ++i)
      for (int j : hoods[static_cast<size_t>(i)]) pairs.emplace_back(std::min(i, j), std::max(i, j));
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  WeightedGraph g;
  g.n_nodes = n;
  g.edges.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    double w = 1.0 - std::abs(dot(field.normals[static_cast<size_t>(i)],
                                  field.normals[static_cast<size_t>(j)]));
    g.edges.push_back({i, j, std::clamp(w, 0.0, 1.0)});
  }
  return g;
}

/// Graph-based greedy segmentation (sorted-edge region merging with the
/// adaptive threshold Int(C) + k_fh/|C|), then one ascending pass that folds
/// every component smaller than min_size into its lowest-weight neighbor.
/// Components below min_size with no neighbor are dropped (background).
/// Output is sorted by descending size; ties break on the smallest contained
/// point index.
inline std::vector<Superpoint> segment_superpoints(const WeightedGraph& graph, double k_fh,
                                                   int min_size) {
  if (!(k_fh > 0)) throw argument_error("segment_superpoints: k_fh must be > 0");
  if (min_size < 1) throw argument_error("segment_superpoints: min_size must be >= 1");

  std::vector<const WeightedEdge*> order;
  order.reserve(graph.edges.size());
  for (const WeightedEdge& e : graph.edges) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](const WeightedEdge* a, const WeightedEdge* b) {
    if (a->weight != b->weight) return a->weight < b->weight;
    if (a->i != b->i) return a->i < b->i;
    return a->j < b->j;
  });

  UnionFind uf(graph.n_nodes);
  std::vector<double> thr(static_cast<size_t>(graph.n_nodes), k_fh);
  for (const WeightedEdge* e : order) {
    int ra = uf.find(e->i), rb = uf.find(e->j);
    if (ra == rb) continue;
    if (e->weight <= std::min(thr[static_cast<size_t>(ra)], thr[static_cast<size_t>(rb)])) {
      int root = uf.unite(ra, rb);
      thr[static_cast<size_t>(root)] = e->weight + k_fh / uf.size(root);
    }
  }

  for (const WeightedEdge* e : order) {
    int ra = uf.find(e->i), rb = uf.find(e->j);
    if (ra == rb) continue;
    if (uf.size(ra) < min_size || uf.size(rb) < min_size) uf.unite(ra, rb);
  }

  std::map<int, std::vector<int>> by_root;
  for (int i = 0; i < graph.n_nodes; ++i) by_root[uf.find(i)].push_back(i);

  std::vector<Superpoint> out;
  for (auto& [root, members] : by_root) {
    if (static_cast<int>(members.size()) < min_size) continue; // background
    Superpoint sp;
    sp.point_indices = std::move(members); // already ascending
    out.push_back(std::move(sp));
  }
  std::sort(out.begin(), out.end(), [](const Superpoint& a, const Superpoint& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a.point_indices.front() < b.point_indices.front();
  });
  for (size_t m = 0; m < out.size(); ++m) out[m].id = static_cast<int>(m);
  return out;
}

/// The min(N, M) largest superpoints, descending by size (ties -> lower id).
inline std::vector<Superpoint> select_prompts(const std::vector<Superpoint>& superpoints, int n) {
  if (n < 1) throw argument_error("select_prompts: N must be >= 1");
  std::vector<Superpoint> sorted = superpoints;
  std::sort(sorted.begin(), sorted.end(), [](const Superpoint& a, const Superpoint& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a.id < b.id;
  });
  if (sorted.size() > static_cast<size_t>(n)) sorted.resize(static_cast<size_t>(n));
  return sorted;
}

/// Debug export: one superpoint id per point, -1 for background.
inline void write_superpoint_partition(const std::string& path, size_t n_points,
                                       const std::vector<Superpoint>& superpoints) {
  std::vector<int> ids(n_points, -1);
  for (const Superpoint& sp : superpoints)
    for (int p : sp.point_indices) ids[static_cast<size_t>(p)] = sp.id;
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  for (int id : ids) out << id << '\n';
}

} // namespace ovlift
