#pragma once

// Exact k-nearest-neighbor search over a fixed cloud with a balanced k-d tree.
// Results are identical to exhaustive search, including tie order.

#include "neuralpci/types.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

namespace neuralpci {

/// The one squared-distance formula used everywhere (trees, losses, oracles),
/// so accelerated and exhaustive paths agree bit for bit.
inline double squared_distance(const double* a, const double* b) {
  const double dx = a[0] - b[0];
  const double dy = a[1] - b[1];
  const double dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

inline double squared_distance(const Vec3& a, const Vec3& b) {
  return squared_distance(a.data(), b.data());
}

struct Neighbor {
  std::size_t index = 0;
  double sq_dist = 0.0;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.sq_dist < b.sq_dist || (a.sq_dist == b.sq_dist && a.index < b.index);
  }
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

class NeighborIndex {
 public:
  NeighborIndex() = default;

  explicit NeighborIndex(const Points& cloud, std::size_t leaf_size = 8)
      : points_(cloud), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
    if (cloud.cols() == 0) throw std::invalid_argument("cannot index an empty cloud");
    order_.resize(static_cast<std::size_t>(cloud.cols()));
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * order_.size() / leaf_size_ + 1);
    build(0, order_.size());
  }

  [[nodiscard]] std::size_t size() const { return order_.size(); }
  [[nodiscard]] const Points& points() const { return points_; }

  /// The k nearest points by squared distance, ascending; ties by index.
  [[nodiscard]] std::vector<Neighbor> knn(const Vec3& query, std::size_t k) const {
    if (k > size()) throw std::invalid_argument("k exceeds the indexed cloud size");
    std::vector<Neighbor> out;
    if (k == 0) return out;
    std::priority_queue<Neighbor> heap;  // max-heap: worst neighbor on top
    search(0, query.data(), k, heap);
    out.resize(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = heap.top();
      heap.pop();
    }
    return out;
  }

  [[nodiscard]] Neighbor nearest(const Vec3& query) const {
    Neighbor best{0, std::numeric_limits<double>::infinity()};
    search_nearest(0, query.data(), best);
    return best;
  }

  /// k nearest neighbors of indexed point `self`, not counting `self`.
  [[nodiscard]] std::vector<Neighbor> knn_excluding_self(std::size_t self, std::size_t k) const {
    if (k + 1 > size()) throw std::invalid_argument("k must be smaller than the indexed cloud size");
    auto nn = knn(points_.col(static_cast<Eigen::Index>(self)), k + 1);
    auto it = std::find_if(nn.begin(), nn.end(), [self](const Neighbor& n) { return n.index == self; });
    if (it != nn.end()) {
      nn.erase(it);
    } else {
      nn.pop_back();  // k+1 duplicates ahead of self; any k of them are exact
    }
    return nn;
  }

 private:
  struct Node {
    std::size_t begin = 0, end = 0;
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::uint32_t left = 0, right = 0;
  };

  std::uint32_t build(std::size_t begin, std::size_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(Node{begin, end});
    if (end - begin <= leaf_size_) return id;

    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      const auto p = points_.col(static_cast<Eigen::Index>(order_[i]));
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    if (hi[axis] == lo[axis]) return id;  // all points coincide

    const std::size_t mid = begin + (end - begin) / 2;
    auto coord = [this, axis](std::size_t idx) { return points_(axis, static_cast<Eigen::Index>(idx)); };
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                     order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) {
                       return coord(a) < coord(b) || (coord(a) == coord(b) && a < b);
                     });
    const double split = coord(order_[mid]);
    const auto left = build(begin, mid);
    const auto right = build(mid, end);
    Node& n = nodes_[id];
    n.axis = axis;
    n.split = split;
    n.left = left;
    n.right = right;
    return id;
  }

  void search(std::uint32_t id, const double* q, std::size_t k,
              std::priority_queue<Neighbor>& heap) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        Neighbor cand{idx, squared_distance(q, points_.col(static_cast<Eigen::Index>(idx)).data())};
        if (heap.size() < k) {
          heap.push(cand);
        } else if (cand < heap.top()) {
          heap.pop();
          heap.push(cand);
        }
      }
      return;
    }
    // Left holds coordinates <= split, right holds >= split.
    const double diff = q[n.axis] - n.split;
    const auto near = diff < 0.0 ? n.left : n.right;
    const auto far = diff < 0.0 ? n.right : n.left;
    search(near, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.top().sq_dist) search(far, q, k, heap);
  }

  void search_nearest(std::uint32_t id, const double* q, Neighbor& best) const {
    const Node& n = nodes_[id];
    if (n.axis < 0) {
      for (std::size_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        const Neighbor cand{idx, squared_distance(q, points_.col(static_cast<Eigen::Index>(idx)).data())};
        if (cand < best) best = cand;
      }
      return;
    }
    const double diff = q[n.axis] - n.split;
    search_nearest(diff < 0.0 ? n.left : n.right, q, best);
    if (diff * diff <= best.sq_dist) search_nearest(diff < 0.0 ? n.right : n.left, q, best);
  }

  Points points_;
  std::size_t leaf_size_ = 8;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

inline NeighborIndex build_index(const PointCloud& cloud, std::size_t leaf_size = 8) {
  return NeighborIndex(cloud.points, leaf_size);
}

inline std::vector<Neighbor> knn(const NeighborIndex& index, const Vec3& query, std::size_t k) {
  return index.knn(query, k);
}

}  // namespace neuralpci
