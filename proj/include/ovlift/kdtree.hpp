#pragma once

#include <algorithm>
#include <queue>
#include <vector>

#include "ovlift/common.hpp"
#include "ovlift/math.hpp"

namespace ovlift {

/// Static 3-d tree over a point set. Queries return neighbors ordered by
/// (squared distance, index), so results never depend on build order.
class KdTree3 {
public:
  explicit KdTree3(std::vector<Vec3> points) : pts_(std::move(points)) {
    idx_.resize(pts_.size());
    for (size_t i = 0; i < idx_.size(); ++i) idx_[i] = static_cast<int>(i);
    nodes_.reserve(pts_.size());
    if (!idx_.empty()) root_ = build(0, static_cast<int>(idx_.size()));
  }

  size_t size() const { return pts_.size(); }

  /// k nearest neighbors of an arbitrary query point.
  std::vector<int> knn(const Vec3& q, int k) const {
    return knn_impl(q, k, -1);
  }

  /// k nearest neighbors of point `i`, excluding `i` itself.
  std::vector<int> knn_of_point(int i, int k) const {
    return knn_impl(pts_[static_cast<size_t>(i)], k, i);
  }

private:
  struct Node {
    int axis = 0;
    int point = -1;
    int left = -1;
    int right = -1;
  };

  // Heap entry; ordering makes the worst kept neighbor the top. A larger
  // distance is worse; on equal distance a larger index is worse, which keeps
  // ties deterministic.
  struct Entry {
    double d2;
    int idx;
    bool operator<(const Entry& o) const {
      if (d2 != o.d2) return d2 < o.d2;
      return idx < o.idx;
    }
  };

  int build(int lo, int hi) {
    if (lo >= hi) return -1;
    // Split on the widest axis for balanced depth on skewed data.
    Vec3 mn = pts_[static_cast<size_t>(idx_[static_cast<size_t>(lo)])];
    Vec3 mx = mn;
    for (int i = lo; i < hi; ++i) {
      const Vec3& p = pts_[static_cast<size_t>(idx_[static_cast<size_t>(i)])];
      mn = {std::min(mn.x, p.x), std::min(mn.y, p.y), std::min(mn.z, p.z)};
      mx = {std::max(mx.x, p.x), std::max(mx.y, p.y), std::max(mx.z, p.z)};
    }
    Vec3 ext = mx - mn;
    int axis = 0;
    if (ext.y > ext.x) axis = 1;
    if (ext.z > (axis == 0 ? ext.x : ext.y)) axis = 2;

    int mid = (lo + hi) / 2;
    std::nth_element(idx_.begin() + lo, idx_.begin() + mid, idx_.begin() + hi,
                     [&](int a, int b) {
                       double ca = coord(a, axis), cb = coord(b, axis);
                       if (ca != cb) return ca < cb;
                       return a < b;
                     });
    Node node;
    node.axis = axis;
    node.point = idx_[static_cast<size_t>(mid)];
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    int left = build(lo, mid);
    int right = build(mid + 1, hi);
    nodes_[static_cast<size_t>(self)].left = left;
    nodes_[static_cast<size_t>(self)].right = right;
    return self;
  }

  double coord(int point, int axis) const {
    const Vec3& p = pts_[static_cast<size_t>(point)];
    return axis == 0 ? p.x : axis == 1 ? p.y : p.z;
  }

  std::vector<int> knn_impl(const Vec3& q, int k, int exclude) const {
    if (k < 1) throw argument_error("knn: k must be >= 1");
    std::priority_queue<Entry> heap;
    search(root_, q, k, exclude, heap);
    std::vector<Entry> entries;
    entries.reserve(heap.size());
    while (!heap.empty()) {
      entries.push_back(heap.top());
      heap.pop();
    }
    std::vector<int> out(entries.size());
    for (size_t i = 0; i < entries.size(); ++i)
      out[entries.size() - 1 - i] = entries[i].idx;
    return out;
  }

  void search(int node, const Vec3& q, int k, int exclude,
              std::priority_queue<Entry>& heap) const {
    if (node < 0) return;
    const Node& n = nodes_[static_cast<size_t>(node)];
    if (n.point != exclude) {
      Vec3 d = pts_[static_cast<size_t>(n.point)] - q;
      Entry e{dot(d, d), n.point};
      if (static_cast<int>(heap.size()) < k) {
        heap.push(e);
      } else if (e < heap.top()) {
        heap.pop();
        heap.push(e);
      }
    }
    double qc = n.axis == 0 ? q.x : n.axis == 1 ? q.y : q.z;
    double pc = coord(n.point, n.axis);
    double diff = qc - pc;
    int near = diff <= 0 ? n.left : n.right;
    int far = diff <= 0 ? n.right : n.left;
    search(near, q, k, exclude, heap);
    // The far side can still hold an equal-distance, lower-index neighbor, so
    // descend on >= full heaps when the plane distance ties the worst entry.
    if (static_cast<int>(heap.size()) < k || diff * diff <= heap.top().d2)
      search(far, q, k, exclude, heap);
  }

  std::vector<Vec3> pts_;
  std::vector<int> idx_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

} // namespace ovlift
