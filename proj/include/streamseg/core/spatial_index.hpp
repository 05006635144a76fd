// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "streamseg/core/se3.hpp"

namespace streamseg {

/// Exact nearest-neighbor result: index into the stored point set plus
/// Euclidean distance.
struct NnHit {
  uint32_t index = 0;
  double distance = 0.0;
};

/// Immutable kd-tree over a fixed point set. Queries return the true nearest
/// point (no approximation).
class SpatialIndex {
 public:
  SpatialIndex() = default;

  explicit SpatialIndex(std::vector<Point3> points) : points_(std::move(points)) {
    if (points_.empty()) {
      throw std::invalid_argument("SpatialIndex: empty point set");
    }
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    nodes_.reserve(points_.size());
    root_ = build(0, static_cast<int64_t>(order_.size()));
  }

  std::size_t size() const { return points_.size(); }
  const std::vector<Point3>& points() const { return points_; }

  NnHit nn_query(const Point3& q) const {
    NnHit best;
    best.distance = std::numeric_limits<double>::infinity();
    search(root_, q, best);
    best.distance = std::sqrt(best.distance);
    return best;
  }

  /// All stored indices within `radius` of q (inclusive), unordered.
  std::vector<uint32_t> radius_query(const Point3& q, double radius) const {
    std::vector<uint32_t> out;
    radius_search(root_, q, radius * radius, out);
    return out;
  }

 private:
  struct Node {
    uint32_t point = 0;
    int32_t left = -1;
    int32_t right = -1;
    uint8_t axis = 0;
  };

  int32_t build(int64_t lo, int64_t hi) {
    if (lo >= hi) return -1;
    // Split on the widest axis of the current subset.
    Point3 mn = points_[order_[lo]], mx = mn;
    for (int64_t i = lo; i < hi; ++i) {
      mn = mn.cwiseMin(points_[order_[i]]);
      mx = mx.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    const int64_t mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                     [&](uint32_t a, uint32_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    Node node;
    node.point = order_[mid];
    node.axis = static_cast<uint8_t>(axis);
    const auto id = static_cast<int32_t>(nodes_.size());
    nodes_.push_back(node);
    const int32_t l = build(lo, mid);
    const int32_t r = build(mid + 1, hi);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void search(int32_t node_id, const Point3& q, NnHit& best) const {
    if (node_id < 0) return;
    const Node& node = nodes_[node_id];
    const Point3& p = points_[node.point];
    const double d2 = (p - q).squaredNorm();
    if (d2 < best.distance || (d2 == best.distance && node.point < best.index)) {
      best.distance = d2;
      best.index = node.point;
    }
    const double delta = q[node.axis] - p[node.axis];
    const int32_t near = delta < 0.0 ? node.left : node.right;
    const int32_t far = delta < 0.0 ? node.right : node.left;
    search(near, q, best);
    if (delta * delta <= best.distance) {
      search(far, q, best);
    }
  }

  void radius_search(int32_t node_id, const Point3& q, double r2,
                     std::vector<uint32_t>& out) const {
    if (node_id < 0) return;
    const Node& node = nodes_[node_id];
    const Point3& p = points_[node.point];
    if ((p - q).squaredNorm() <= r2) out.push_back(node.point);
    const double delta = q[node.axis] - p[node.axis];
    const int32_t near = delta < 0.0 ? node.left : node.right;
    const int32_t far = delta < 0.0 ? node.right : node.left;
    radius_search(near, q, r2, out);
    if (delta * delta <= r2) radius_search(far, q, r2, out);
  }

  std::vector<Point3> points_;
  std::vector<uint32_t> order_;
  std::vector<Node> nodes_;
  int32_t root_ = -1;
};

}  // namespace streamseg
