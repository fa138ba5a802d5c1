#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "gmmscape/common.hpp"

namespace gmmscape {

/// Median-split kd-tree over 4D rows of a matrix, for radius queries.
/// The tree stores row indices; the point matrix must outlive the tree.
class KdTree4 {
 public:
  explicit KdTree4(const MatX4& pts, int leaf_size = 16)
      : pts_(pts), leaf_size_(leaf_size) {
    const int n = static_cast<int>(pts.rows());
    idx_.resize(n);
    std::iota(idx_.begin(), idx_.end(), 0);
    if (n > 0) {
      nodes_.reserve(2 * n / leaf_size_ + 2);
      build(0, n);
    }
  }

  /// Calls visit(row_index) for every point within `radius` of q.
  template <typename Visitor>
  void for_each_in_radius(const Vec4& q, double radius, Visitor&& visit) const {
    if (!nodes_.empty()) {
      search(0, q, radius * radius, radius, visit);
    }
  }

  std::vector<int> radius_indices(const Vec4& q, double radius) const {
    std::vector<int> out;
    for_each_in_radius(q, radius, [&](int i) { out.push_back(i); });
    return out;
  }

 private:
  struct Node {
    int begin, end;      // index range (leaf scan range for leaves)
    int axis = -1;       // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
  };

  int build(int begin, int end) {
    const int node_id = static_cast<int>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= leaf_size_) return node_id;

    // Split on the widest axis at the median.
    Vec4 lo = pts_.row(idx_[begin]).transpose();
    Vec4 hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      const Vec4 p = pts_.row(idx_[i]).transpose();
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] - lo[axis] <= 0.0) return node_id;  // all points coincide

    const int mid = begin + (end - begin) / 2;
    std::nth_element(idx_.begin() + begin, idx_.begin() + mid,
                     idx_.begin() + end, [&](int a, int b) {
                       return pts_(a, axis) < pts_(b, axis);
                     });
    nodes_[node_id].axis = axis;
    nodes_[node_id].split = pts_(idx_[mid], axis);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[node_id].left = left;
    nodes_[node_id].right = right;
    return node_id;
  }

  template <typename Visitor>
  void search(int node_id, const Vec4& q, double r2, double r,
              Visitor&& visit) const {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int p = idx_[i];
        if ((pts_.row(p).transpose() - q).squaredNorm() <= r2) visit(p);
      }
      return;
    }
    const double d = q[node.axis] - node.split;
    if (d <= r) search(node.left, q, r2, r, visit);
    if (d >= -r) search(node.right, q, r2, r, visit);
  }

  const MatX4& pts_;
  int leaf_size_;
  std::vector<int> idx_;
  std::vector<Node> nodes_;
};

}  // namespace gmmscape
