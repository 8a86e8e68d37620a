#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovlift/common.hpp"
#include "ovlift/overlap.hpp"

namespace ovlift {

enum class ColumnNorm { L1, L2, NonzeroCount };

inline ColumnNorm parse_column_norm(const std::string& s) {
  if (s == "L1" || s == "l1") return ColumnNorm::L1;
  if (s == "L2" || s == "l2") return ColumnNorm::L2;
  if (s == "nonzero-count" || s == "nonzero_count") return ColumnNorm::NonzeroCount;
  throw config_error("unknown column norm: " + s + " (expected L1, L2, or nonzero-count)");
}

inline std::string column_norm_name(ColumnNorm n) {
  switch (n) {
    case ColumnNorm::L1: return "L1";
    case ColumnNorm::L2: return "L2";
    default: return "nonzero-count";
  }
}

struct MergeConfig {
  double tau = 0.45;
  ColumnNorm column_norm = ColumnNorm::L1;
  int max_passes = 0; // 0 = number of coarse masks
};

struct Instance {
  int id = -1;
  std::vector<int> point_indices;  // ascending
  std::vector<int> composition;    // coarse mask ids, merge order
  std::optional<std::string> label;
  std::optional<double> confidence; // cosine score in [-1, 1]
};

struct MergeResult {
  std::vector<Instance> instances;
  // Final (post-merge) column per instance, aligned with instances.
  std::vector<std::vector<double>> final_columns;
  int passes = 0;
};

/// TS_n[j] = F_n . F_j over all columns j of the table.
inline std::vector<double> similarity_scores(const OverlapScoreTable& table, int n) {
  if (n < 0 || n >= table.cols) throw argument_error("similarity_scores: column out of range");
  std::vector<double> ts(static_cast<size_t>(table.cols), 0.0);
  for (int m = 0; m < table.rows; ++m) {
    double fn = table.at(m, n);
    if (fn == 0.0) continue;
    for (int j = 0; j < table.cols; ++j) ts[static_cast<size_t>(j)] += fn * table.at(m, j);
  }
  return ts;
}

inline double column_magnitude(const std::vector<double>& column, ColumnNorm norm) {
  double acc = 0.0;
  switch (norm) {
    case ColumnNorm::L1:
      for (double x : column) acc += std::abs(x);
      return acc;
    case ColumnNorm::L2:
      for (double x : column) acc += x * x;
      return std::sqrt(acc);
    default:
      for (double x : column) acc += (x != 0.0) ? 1.0 : 0.0;
      return acc;
  }
}

/// max(1, |F_n| / tau).
inline double merge_threshold(const std::vector<double>& column, double tau, ColumnNorm norm) {
  if (!(tau > 0)) throw argument_error("merge_threshold: tau must be > 0");
  return std::max(1.0, column_magnitude(column, norm) / tau);
}

/// Updatable merging. Surviving masks are scanned in ascending id; the anchor
/// n compares against every j > n using similarities over the CURRENT columns
/// and the anchor's current column magnitude. An absorbed column is summed
/// into the anchor so later comparisons see the enlarged mask. Whole passes
/// repeat until none merges or max_passes is hit.
inline MergeResult merge_coarse_masks(const OverlapScoreTable& table,
                                      const std::vector<CoarseMask>& coarse_masks,
                                      const MergeConfig& config) {
  if (!(config.tau > 0)) throw argument_error("merge_coarse_masks: tau must be > 0");
  const int n_masks = static_cast<int>(coarse_masks.size());
  for (const CoarseMask& cm : coarse_masks)
    if (cm.id < 0 || cm.id >= table.cols)
      throw argument_error("merge_coarse_masks: coarse mask id " + std::to_string(cm.id) +
                           " has no table column");

  // Working state per coarse mask (indexed by position, ids kept inside).
  std::vector<std::vector<double>> columns(static_cast<size_t>(n_masks),
                                           std::vector<double>(static_cast<size_t>(table.rows)));
  for (int i = 0; i < n_masks; ++i)
    for (int m = 0; m < table.rows; ++m)
      columns[static_cast<size_t>(i)][static_cast<size_t>(m)] =
          table.at(m, coarse_masks[static_cast<size_t>(i)].id);

  std::vector<bool> alive(static_cast<size_t>(n_masks), true);
  std::vector<std::vector<int>> composition(static_cast<size_t>(n_masks));
  std::vector<std::vector<int>> points(static_cast<size_t>(n_masks));
  for (int i = 0; i < n_masks; ++i) {
    composition[static_cast<size_t>(i)] = {coarse_masks[static_cast<size_t>(i)].id};
    points[static_cast<size_t>(i)] = coarse_masks[static_cast<size_t>(i)].point_indices;
  }

  auto dot_cols = [&](int a, int b) {
    const auto& ca = columns[static_cast<size_t>(a)];
    const auto& cb = columns[static_cast<size_t>(b)];
    double s = 0.0;
    for (size_t m = 0; m < ca.size(); ++m) s += ca[m] * cb[m];
    return s;
  };

  int max_passes = config.max_passes > 0 ? config.max_passes : std::max(1, n_masks);
  int passes = 0;
  while (passes < max_passes) {
    ++passes;
    bool merged_any = false;
    for (int n = 0; n < n_masks; ++n) {
      if (!alive[static_cast<size_t>(n)]) continue;
      for (int j = n + 1; j < n_masks; ++j) {
        if (!alive[static_cast<size_t>(j)]) continue;
        double thr = merge_threshold(columns[static_cast<size_t>(n)], config.tau,
                                     config.column_norm);
        if (dot_cols(n, j) > thr) {
          auto& cn = columns[static_cast<size_t>(n)];
          const auto& cj = columns[static_cast<size_t>(j)];
          for (size_t m = 0; m < cn.size(); ++m) cn[m] += cj[m];
          auto& comp = composition[static_cast<size_t>(n)];
          const auto& jcomp = composition[static_cast<size_t>(j)];
          comp.insert(comp.end(), jcomp.begin(), jcomp.end());
          auto& pn = points[static_cast<size_t>(n)];
          const auto& pj = points[static_cast<size_t>(j)];
          std::vector<int> merged;
          merged.reserve(pn.size() + pj.size());
          std::merge(pn.begin(), pn.end(), pj.begin(), pj.end(), std::back_inserter(merged));
          pn = std::move(merged);
          alive[static_cast<size_t>(j)] = false;
          merged_any = true;
        }
      }
    }
    if (!merged_any) break;
  }

  MergeResult result;
  result.passes = passes;
  for (int i = 0; i < n_masks; ++i) {
    if (!alive[static_cast<size_t>(i)]) continue;
    Instance inst;
    inst.id = static_cast<int>(result.instances.size());
    inst.point_indices = std::move(points[static_cast<size_t>(i)]);
    inst.composition = std::move(composition[static_cast<size_t>(i)]);
    result.instances.push_back(std::move(inst));
    result.final_columns.push_back(std::move(columns[static_cast<size_t>(i)]));
  }
  return result;
}

/// Fixpoint audit: true when no surviving pair is still strictly above its
/// threshold under the final columns.
inline bool merge_fixpoint_holds(const MergeResult& result, const MergeConfig& config) {
  const auto& cols = result.final_columns;
  for (size_t n = 0; n < cols.size(); ++n) {
    double thr = merge_threshold(cols[n], config.tau, config.column_norm);
    for (size_t j = n + 1; j < cols.size(); ++j) {
      double s = 0.0;
      for (size_t m = 0; m < cols[n].size(); ++m) s += cols[n][m] * cols[j][m];
      if (s > thr) return false;
    }
  }
  return true;
}

inline void write_instances_json(const std::string& path, const std::vector<Instance>& instances) {
  nlohmann::json j = nlohmann::json::array();
  for (const Instance& inst : instances) {
    nlohmann::json item;
    item["id"] = inst.id;
    item["composition"] = inst.composition;
    item["point_count"] = inst.point_indices.size();
    if (inst.label) item["label"] = *inst.label;
    if (inst.confidence) item["confidence"] = *inst.confidence;
    j.push_back(item);
  }
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << j.dump(2) << '\n';
}

/// Per-point instance id file: one id per point, -1 = background.
inline void write_instance_ids(const std::string& path, size_t n_points,
                               const std::vector<Instance>& instances) {
  std::vector<int> ids(n_points, -1);
  for (const Instance& inst : instances)
    for (int p : inst.point_indices) ids[static_cast<size_t>(p)] = inst.id;
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  for (int id : ids) out << id << '\n';
}

} // namespace ovlift
