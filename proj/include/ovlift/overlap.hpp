#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include "ovlift/common.hpp"
#include "ovlift/geometry.hpp"
#include "ovlift/mask.hpp"
#include "ovlift/superpoints.hpp"

namespace ovlift {

/// M x N non-negative integer table: rows = superpoints, columns = prompts,
/// entry = number of views in which the superpoint overlapped the prompt's
/// back-projected mask beyond theta.
struct OverlapScoreTable {
  int rows = 0; // M superpoints
  int cols = 0; // N prompts
  std::vector<int> v;

  OverlapScoreTable() = default;
  OverlapScoreTable(int m, int n) : rows(m), cols(n), v(static_cast<size_t>(m) * n, 0) {}

  int& at(int m, int n) { return v[static_cast<size_t>(m) * cols + n]; }
  int at(int m, int n) const { return v[static_cast<size_t>(m) * cols + n]; }
};

/// |S intersect BP| / |S| for sorted index sets.
inline double overlap_ratio(const std::vector<int>& s, const std::vector<int>& bp) {
  if (s.empty()) throw argument_error("overlap_ratio: empty superpoint set");
  size_t hits = 0;
  auto it_s = s.begin();
  auto it_b = bp.begin();
  while (it_s != s.end() && it_b != bp.end()) {
    if (*it_s < *it_b) {
      ++it_s;
    } else if (*it_b < *it_s) {
      ++it_b;
    } else {
      ++hits;
      ++it_s;
      ++it_b;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(s.size());
}

/// F[m][n] = #views t with overlap_ratio(S_m, BP_nt) strictly above theta.
/// Implemented as a single scan per back-projection over a point->superpoint
/// lookup, which is equivalent to the per-(m,n,t) ratio test because the
/// superpoints are disjoint.
inline OverlapScoreTable build_score_table(const std::vector<Superpoint>& superpoints,
                                           const std::vector<BackProjection>& back_projections,
                                           size_t n_points, int n_prompts, double theta) {
  if (theta < 0.0 || theta >= 1.0)
    throw argument_error("build_score_table: theta must be in [0, 1)");
  if (n_prompts < 0) throw argument_error("build_score_table: negative prompt count");

  const int m_count = static_cast<int>(superpoints.size());
  std::vector<int> sp_of(n_points, -1);
  for (int m = 0; m < m_count; ++m)
    for (int p : superpoints[static_cast<size_t>(m)].point_indices) {
      if (p < 0 || static_cast<size_t>(p) >= n_points)
        throw consistency_error("build_score_table: superpoint point index out of range");
      if (sp_of[static_cast<size_t>(p)] != -1)
        throw consistency_error("build_score_table: superpoints are not disjoint at point " +
                                std::to_string(p));
      sp_of[static_cast<size_t>(p)] = m;
    }

  OverlapScoreTable table(m_count, n_prompts);
  std::vector<int> hits(static_cast<size_t>(m_count), 0);
  std::vector<int> touched;
  for (const BackProjection& bp : back_projections) {
    if (bp.prompt_id < 0 || bp.prompt_id >= n_prompts)
      throw consistency_error("build_score_table: back-projection prompt id out of range");
    touched.clear();
    for (int p : bp.point_indices) {
      if (p < 0 || static_cast<size_t>(p) >= n_points)
        throw consistency_error("build_score_table: back-projection point index out of range");
      int m = sp_of[static_cast<size_t>(p)];
      if (m < 0) continue;
      if (hits[static_cast<size_t>(m)] == 0) touched.push_back(m);
      ++hits[static_cast<size_t>(m)];
    }
    for (int m : touched) {
      double ratio = static_cast<double>(hits[static_cast<size_t>(m)]) /
                     static_cast<double>(superpoints[static_cast<size_t>(m)].size());
      if (ratio > theta) ++table.at(m, bp.prompt_id);
      hits[static_cast<size_t>(m)] = 0;
    }
  }
  return table;
}

struct ViewMaskRef {
  int view_id = -1;
  MaskRecord mask;
};

struct CoarseMask {
  int id = -1;                          // origin prompt index (table column)
  std::vector<int> point_indices;       // union of member superpoints, ascending
  std::vector<int> member_superpoints;  // ascending superpoint ids
  std::vector<ViewMaskRef> view_masks;  // 2D masks that built this column
};

struct CoarseAssembly {
  std::vector<CoarseMask> masks;
  std::vector<int> prompt_to_mask; // per prompt: index into masks, or -1 if dropped
};

/// Row argmax: superpoint m joins the prompt with the highest score in its
/// row (ties -> lower prompt index); all-zero rows stay background. Prompts
/// that attracted no superpoint are dropped and recorded as -1 in the id map.
inline CoarseAssembly assemble_coarse_masks(const OverlapScoreTable& table,
                                            const std::vector<Superpoint>& superpoints,
                                            const std::vector<Superpoint>& prompts) {
  if (table.rows != static_cast<int>(superpoints.size()))
    throw argument_error("assemble_coarse_masks: table rows do not match superpoint count");
  if (table.cols != static_cast<int>(prompts.size()))
    throw argument_error("assemble_coarse_masks: table columns do not match prompt count");

  std::vector<std::vector<int>> members(static_cast<size_t>(table.cols));
  for (int m = 0; m < table.rows; ++m) {
    int best_n = -1;
    int best = 0;
    for (int n = 0; n < table.cols; ++n) {
      int s = table.at(m, n);
      if (s > best) {
        best = s;
        best_n = n;
      }
    }
    if (best_n >= 0) members[static_cast<size_t>(best_n)].push_back(m);
  }

  CoarseAssembly out;
  out.prompt_to_mask.assign(static_cast<size_t>(table.cols), -1);
  for (int n = 0; n < table.cols; ++n) {
    if (members[static_cast<size_t>(n)].empty()) continue;
    CoarseMask cm;
    cm.id = n;
    cm.member_superpoints = members[static_cast<size_t>(n)];
    for (int m : cm.member_superpoints) {
      const auto& pts = superpoints[static_cast<size_t>(m)].point_indices;
      cm.point_indices.insert(cm.point_indices.end(), pts.begin(), pts.end());
    }
    std::sort(cm.point_indices.begin(), cm.point_indices.end());
    out.prompt_to_mask[static_cast<size_t>(n)] = static_cast<int>(out.masks.size());
    out.masks.push_back(std::move(cm));
  }
  return out;
}

inline void write_score_table_csv(const std::string& path, const OverlapScoreTable& table) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  for (int m = 0; m < table.rows; ++m) {
    for (int n = 0; n < table.cols; ++n) {
      if (n) out << ',';
      out << table.at(m, n);
    }
    out << '\n';
  }
}

/// One prompt's overlap column, one superpoint score per line.
inline void write_prompt_column(const std::string& path, const OverlapScoreTable& table, int n) {
  if (n < 0 || n >= table.cols) throw argument_error("write_prompt_column: column out of range");
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  for (int m = 0; m < table.rows; ++m) out << table.at(m, n) << '\n';
}

} // namespace ovlift
