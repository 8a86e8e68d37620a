#pragma once

#include <numeric>
#include <vector>

namespace ovlift {

class UnionFind {
public:
  explicit UnionFind(int n) : parent_(static_cast<size_t>(n)), size_(static_cast<size_t>(n), 1) {
    std::iota(parent_.begin(), parent_.end(), 0);
  }

  int find(int a) {
    int root = a;
    while (parent_[static_cast<size_t>(root)] != root) root = parent_[static_cast<size_t>(root)];
    while (parent_[static_cast<size_t>(a)] != root) {
      int next = parent_[static_cast<size_t>(a)];
      parent_[static_cast<size_t>(a)] = root;
      a = next;
    }
    return root;
  }

  /// Merges the sets of a and b; the lower root index stays the root so that
  /// results are independent of argument order. Returns the surviving root,
  /// or -1 when a and b were already joined.
  int unite(int a, int b) {
    int ra = find(a), rb = find(b);
    if (ra == rb) return -1;
    if (rb < ra) std::swap(ra, rb);
    parent_[static_cast<size_t>(rb)] = ra;
    size_[static_cast<size_t>(ra)] += size_[static_cast<size_t>(rb)];
    return ra;
  }

  int size(int a) { return size_[static_cast<size_t>(find(a))]; }

private:
  std::vector<int> parent_;
  std::vector<int> size_;
};

} // namespace ovlift
