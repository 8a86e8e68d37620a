#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ovlift/common.hpp"
#include "ovlift/labeling.hpp"
#include "ovlift/scene.hpp"

namespace ovlift {

struct PredictionRecord {
  std::vector<int> point_indices; // ascending
  std::optional<std::string> label;
  double confidence = 0.0;
};

struct GtInstanceRecord {
  std::vector<int> point_indices; // ascending
  std::string label;
};

struct MetricsReport {
  std::optional<double> ap;   // mean over IoU 0.50:0.05:0.95
  std::optional<double> ap50;
  std::optional<double> ap25;
  std::map<std::string, double> per_label_ap;
  std::map<std::string, double> per_label_ap50;
  std::map<std::string, double> per_label_ap25;
  std::map<std::string, double> per_group_ap;
  std::optional<double> coverage; // GT points touched by any prediction
  int n_gt_instances = 0;
  int n_predictions = 0;
  int n_unlabeled_predictions = 0;
};

inline double iou(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.empty() && b.empty()) throw argument_error("iou: both sets empty");
  size_t inter = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (*ia < *ib) {
      ++ia;
    } else if (*ib < *ia) {
      ++ib;
    } else {
      ++inter;
      ++ia;
      ++ib;
    }
  }
  size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

/// Single-label AP. Predictions are ranked by descending confidence (ties ->
/// larger point set, then input order); each prediction greedily claims the
/// unmatched GT instance with the highest IoU >= iou_thresh (IoU ties -> lower
/// GT index). The PR curve is integrated with the all-point interpolation
/// (monotone precision envelope).
inline double average_precision(const std::vector<PredictionRecord>& preds,
                                const std::vector<GtInstanceRecord>& gts, double iou_thresh) {
  if (!(iou_thresh > 0.0) || iou_thresh > 1.0)
    throw argument_error("average_precision: iou_thresh must be in (0, 1]");
  if (gts.empty()) throw argument_error("average_precision: no ground truth instances");
  if (preds.empty()) return 0.0;

  std::vector<size_t> order(preds.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (preds[a].confidence != preds[b].confidence) return preds[a].confidence > preds[b].confidence;
    return preds[a].point_indices.size() > preds[b].point_indices.size();
  });

  std::vector<bool> gt_used(gts.size(), false);
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (size_t rank = 0; rank < order.size(); ++rank) {
    const PredictionRecord& pred = preds[order[rank]];
    int best_gt = -1;
    double best_iou = 0.0;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g]) continue;
      double v = iou(pred.point_indices, gts[g].point_indices);
      if (v >= iou_thresh && v > best_iou) {
        best_iou = v;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0) {
      gt_used[static_cast<size_t>(best_gt)] = true;
      ++tp;
    } else {
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(gts.size()));
  }

  for (size_t i = precision.size(); i-- > 1;)
    precision[i - 1] = std::max(precision[i - 1], precision[i]);

  double ap = 0.0, prev_recall = 0.0;
  for (size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

inline std::vector<double> ap_thresholds() {
  std::vector<double> t;
  for (int i = 0; i < 10; ++i) t.push_back(static_cast<double>(50 + 5 * i) / 100.0);
  return t;
}

/// Ground truth as per-instance records with folded labels.
inline std::vector<GtInstanceRecord> gt_records_from_ground_truth(const GroundTruth& gt) {
  std::map<int, GtInstanceRecord> by_id;
  for (size_t p = 0; p < gt.instance_ids.size(); ++p) {
    int id = gt.instance_ids[p];
    if (id == 0) continue;
    by_id[id].point_indices.push_back(static_cast<int>(p));
  }
  std::vector<GtInstanceRecord> out;
  for (auto& [id, rec] : by_id) {
    auto it = gt.labels.find(id);
    if (it == gt.labels.end())
      throw consistency_error("ground truth instance " + std::to_string(id) + " has no label");
    rec.label = fold_tag(it->second);
    out.push_back(std::move(rec));
  }
  return out;
}

/// Class-aware AP across the 0.50:0.05:0.95 ladder plus AP50/AP25, per-group
/// means, and label-free coverage. Unlabeled predictions only contribute to
/// coverage. Labels are folded on both sides.
inline MetricsReport evaluate(const std::vector<PredictionRecord>& preds,
                              const std::vector<GtInstanceRecord>& gts,
                              const std::map<std::string, std::string>& groups = {}) {
  MetricsReport report;
  report.n_gt_instances = static_cast<int>(gts.size());
  report.n_predictions = static_cast<int>(preds.size());
  for (const PredictionRecord& p : preds)
    if (!p.label) ++report.n_unlabeled_predictions;
  if (gts.empty()) return report; // absent metrics, not zeros

  std::map<std::string, std::vector<GtInstanceRecord>> gt_by_label;
  for (const GtInstanceRecord& g : gts) gt_by_label[fold_tag(g.label)].push_back(g);
  std::map<std::string, std::vector<PredictionRecord>> pred_by_label;
  for (const PredictionRecord& p : preds)
    if (p.label) pred_by_label[fold_tag(*p.label)].push_back(p);

  const std::vector<double> ladder = ap_thresholds();
  for (const auto& [label, label_gts] : gt_by_label) {
    auto pit = pred_by_label.find(label);
    static const std::vector<PredictionRecord> none;
    const std::vector<PredictionRecord>& label_preds = pit == pred_by_label.end() ? none : pit->second;
    double sum = 0.0;
    for (double t : ladder) sum += average_precision(label_preds, label_gts, t);
    report.per_label_ap[label] = sum / static_cast<double>(ladder.size());
    report.per_label_ap50[label] = average_precision(label_preds, label_gts, 0.50);
    report.per_label_ap25[label] = average_precision(label_preds, label_gts, 0.25);
  }

  auto mean_of = [](const std::map<std::string, double>& m) {
    double s = 0.0;
    for (const auto& [k, v] : m) s += v;
    return s / static_cast<double>(m.size());
  };
  report.ap = mean_of(report.per_label_ap);
  report.ap50 = mean_of(report.per_label_ap50);
  report.ap25 = mean_of(report.per_label_ap25);

  std::map<std::string, std::vector<double>> group_values;
  for (const auto& [label, ap] : report.per_label_ap) {
    auto git = groups.find(label);
    if (git != groups.end()) group_values[git->second].push_back(ap);
  }
  for (const auto& [group, values] : group_values) {
    double s = 0.0;
    for (double v : values) s += v;
    report.per_group_ap[group] = s / static_cast<double>(values.size());
  }

  std::set<int> covered;
  for (const PredictionRecord& p : preds) covered.insert(p.point_indices.begin(), p.point_indices.end());
  size_t gt_points = 0, hit = 0;
  for (const GtInstanceRecord& g : gts)
    for (int p : g.point_indices) {
      ++gt_points;
      if (covered.count(p)) ++hit;
    }
  report.coverage = gt_points == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(gt_points);
  return report;
}

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
    else j[key] = nullptr;
  };
  put("ap", r.ap);
  put("ap50", r.ap50);
  put("ap25", r.ap25);
  put("coverage", r.coverage);
  j["per_label_ap"] = r.per_label_ap;
  j["per_label_ap50"] = r.per_label_ap50;
  j["per_label_ap25"] = r.per_label_ap25;
  j["per_group_ap"] = r.per_group_ap;
  j["n_gt_instances"] = r.n_gt_instances;
  j["n_predictions"] = r.n_predictions;
  j["n_unlabeled_predictions"] = r.n_unlabeled_predictions;
  return j;
}

inline void write_metrics_json(const std::string& path, const MetricsReport& r) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open for writing: " + path);
  out << metrics_to_json(r).dump(2) << '\n';
}

inline std::string format_metrics_text(const MetricsReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(4);
  auto line = [&](const std::string& name, const std::optional<double>& v) {
    os << name;
    for (size_t i = name.size(); i < 16; ++i) os << ' ';
    if (v) os << *v;
    else os << "n/a";
    os << '\n';
  };
  line("AP", r.ap);
  line("AP50", r.ap50);
  line("AP25", r.ap25);
  line("coverage", r.coverage);
  if (!r.per_label_ap.empty()) {
    os << "\nper-label AP (AP50 / AP25):\n";
    for (const auto& [label, ap] : r.per_label_ap) {
      os << "  " << label;
      for (size_t i = label.size(); i < 20; ++i) os << ' ';
      os << ap << "  " << r.per_label_ap50.at(label) << " / " << r.per_label_ap25.at(label) << '\n';
    }
  }
  if (!r.per_group_ap.empty()) {
    os << "\nper-group AP:\n";
    for (const auto& [group, ap] : r.per_group_ap) {
      os << "  " << group;
      for (size_t i = group.size(); i < 20; ++i) os << ' ';
      os << ap << '\n';
    }
  }
  os << "\ngt instances: " << r.n_gt_instances << ", predictions: " << r.n_predictions
     << " (" << r.n_unlabeled_predictions << " unlabeled)\n";
  return os.str();
}

} // namespace ovlift
