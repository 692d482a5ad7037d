#include "gsfuse/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <queue>

namespace gsfuse {

KdTree::KdTree(std::span<const Vec3> points, std::size_t leaf_size)
    : points_(points.begin(), points.end()), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / leaf_size_ + 2);
    build(0, static_cast<std::uint32_t>(points_.size()));
  }
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
  Node node;
  node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  node.hi = -node.lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    node.lo = node.lo.cwiseMin(points_[order_[i]]);
    node.hi = node.hi.cwiseMax(points_[order_[i]]);
  }
  node.begin = begin;
  node.end = end;
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= leaf_size_) return id;

  int axis = 0;
  (node.hi - node.lo).maxCoeff(&axis);
  if (node.hi[axis] - node.lo[axis] <= 0.0) return id;  // all points identical

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  nodes_[id].axis = static_cast<std::int8_t>(axis);
  nodes_[id].split = points_[order_[mid]][axis];
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

double KdTree::box_dist_sq(const Node& n, const Vec3& q) {
  double d = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double e = std::max({n.lo[k] - q[k], 0.0, q[k] - n.hi[k]});
    d += e * e;
  }
  return d;
}

std::vector<Neighbor> KdTree::knn(const Vec3& q, std::size_t k) const {
  std::vector<Neighbor> heap;  // max-heap on (dist, index)
  if (k == 0 || points_.empty()) return heap;
  heap.reserve(k + 1);

  const auto worst = [&]() {
    return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.front().dist_sq;
  };

  // Explicit stack; descend the nearer child first.
  std::vector<std::int32_t> stack{0};
  while (!stack.empty()) {
    const Node& n = nodes_[stack.back()];
    stack.pop_back();
    if (box_dist_sq(n, q) > worst()) continue;
    if (n.axis < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        const Neighbor cand{idx, (points_[idx] - q).squaredNorm()};
        if (heap.size() < k) {
          heap.push_back(cand);
          std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = cand;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      continue;
    }
    const bool go_left = q[n.axis] < n.split;
    stack.push_back(go_left ? n.right : n.left);
    stack.push_back(go_left ? n.left : n.right);
  }
  std::sort_heap(heap.begin(), heap.end());
  return heap;
}

Neighbor KdTree::nearest(const Vec3& q) const {
  const auto r = knn(q, 1);
  if (r.empty()) return {points_.size(), std::numeric_limits<double>::infinity()};
  return r.front();
}

Neighbor KdTree::nearest_excluding(const Vec3& q, std::size_t exclude) const {
  const auto r = knn(q, 2);
  for (const auto& n : r) {
    if (n.index != exclude) return n;
  }
  return {points_.size(), std::numeric_limits<double>::infinity()};
}

template <class Visit>
void KdTree::radius_impl(const Vec3& q, double r_sq, Visit&& visit) const {
  if (points_.empty()) return;
  std::vector<std::int32_t> stack{0};
  while (!stack.empty()) {
    const Node& n = nodes_[stack.back()];
    stack.pop_back();
    if (box_dist_sq(n, q) > r_sq) continue;
    if (n.axis < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        const double d = (points_[idx] - q).squaredNorm();
        if (d <= r_sq) visit(idx, d);
      }
      continue;
    }
    stack.push_back(n.left);
    stack.push_back(n.right);
  }
}

void KdTree::radius(const Vec3& q, double r, std::vector<std::size_t>& out) const {
  out.clear();
  radius_impl(q, r * r, [&](std::size_t idx, double) { out.push_back(idx); });
  std::sort(out.begin(), out.end());
}

void KdTree::radius_neighbors(const Vec3& q, double r, std::vector<Neighbor>& out) const {
  out.clear();
  radius_impl(q, r * r, [&](std::size_t idx, double d) { out.push_back({idx, d}); });
  std::sort(out.begin(), out.end(), [](const Neighbor& a, const Neighbor& b) { return a.index < b.index; });
}

}  // namespace gsfuse
