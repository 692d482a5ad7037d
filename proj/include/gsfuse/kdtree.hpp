#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gsfuse/transform.hpp"

namespace gsfuse {

struct Neighbor {
  std::size_t index = 0;
  double dist_sq = 0.0;

  // Lexicographic (distance, index) so ties resolve to the lower index.
  bool operator<(const Neighbor& o) const {
    return dist_sq < o.dist_sq || (dist_sq == o.dist_sq && index < o.index);
  }
};

/// Static 3-d tree over a point set. Queries are exact and deterministic.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points, std::size_t leaf_size = 12);

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  /// The k nearest points sorted by (distance, index).
  std::vector<Neighbor> knn(const Vec3& q, std::size_t k) const;
  /// Nearest point; index == size() when the tree is empty.
  Neighbor nearest(const Vec3& q) const;
  /// Nearest point whose index differs from `exclude`.
  Neighbor nearest_excluding(const Vec3& q, std::size_t exclude) const;
  /// All points with |p - q| <= r, sorted by index.
  void radius(const Vec3& q, double r, std::vector<std::size_t>& out) const;
  /// Same as radius() but returns (index, dist_sq) pairs sorted by index.
  void radius_neighbors(const Vec3& q, double r, std::vector<Neighbor>& out) const;

 private:
  struct Node {
    double split = 0.0;
    std::uint32_t begin = 0, end = 0;  // range into order_ for leaves
    std::int32_t left = -1, right = -1;
    std::int8_t axis = -1;  // -1 for leaves
    Vec3 lo, hi;            // bounding box
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  static double box_dist_sq(const Node& n, const Vec3& q);

  template <class Visit>
  void radius_impl(const Vec3& q, double r_sq, Visit&& visit) const;

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_ = 12;
};

}  // namespace gsfuse
