#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "gsfuse/kdtree.hpp"
#include "gsfuse/skeleton.hpp"

namespace gsfuse {
namespace {

/// Prim's algorithm on the complete graph; returns edge lengths.
std::vector<double> mst_edge_lengths(const std::vector<Vec3>& pts) {
  std::vector<double> edges;
  const std::size_t n = pts.size();
  if (n < 2) return edges;
  std::vector<double> best(n, std::numeric_limits<double>::infinity());
  std::vector<bool> in_tree(n, false);
  best[0] = 0.0;
  for (std::size_t step = 0; step < n; ++step) {
    std::size_t u = n;
    for (std::size_t v = 0; v < n; ++v) {
      if (!in_tree[v] && (u == n || best[v] < best[u])) u = v;
    }
    in_tree[u] = true;
    if (step > 0) edges.push_back(best[u]);
    for (std::size_t v = 0; v < n; ++v) {
      if (!in_tree[v]) best[v] = std::min(best[v], (pts[u] - pts[v]).norm());
    }
  }
  return edges;
}

double median(std::vector<double> v) {
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

double hausdorff_distance(std::span<const Vec3> a, std::span<const Vec3> b) {
  if (a.empty() || b.empty()) return std::numeric_limits<double>::infinity();
  const KdTree ta(a), tb(b);
  double h = 0.0;
  for (const Vec3& p : a) h = std::max(h, tb.nearest(p).dist_sq);
  for (const Vec3& p : b) h = std::max(h, ta.nearest(p).dist_sq);
  return std::sqrt(h);
}

std::vector<Vec3> sample_polylines(const std::vector<Polyline>& lines, double spacing) {
  std::vector<Vec3> out;
  for (const auto& line : lines) {
    if (line.empty()) continue;
    out.push_back(line.front());
    for (std::size_t k = 1; k < line.size(); ++k) {
      const Vec3 d = line[k] - line[k - 1];
      const int steps = std::max(1, static_cast<int>(std::ceil(d.norm() / spacing)));
      for (int s = 1; s <= steps; ++s) out.push_back(line[k - 1] + d * (static_cast<double>(s) / steps));
    }
  }
  return out;
}

SkeletonMetrics skeleton_metrics(const Skeleton& skel, const SkeletonConfig& cfg, const std::vector<Polyline>* reference) {
  SkeletonMetrics m;
  const std::size_t K = skel.nodes.size();

  if (K >= 2) {
    const auto lap = node_laplacians(skel.nodes, cfg.laplacian_k);
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.laplacian_k), K - 1);
    const KdTree tree(skel.nodes);
    double acc = 0.0;
    for (std::size_t j = 0; j < K; ++j) {
      const auto nn = tree.knn(skel.nodes[j], k + 1);
      double dsum = 0.0;
      std::size_t used = 0;
      for (const auto& n : nn) {
        if (n.index == j || used == k) continue;
        dsum += std::sqrt(n.dist_sq);
        ++used;
      }
      const double mean_dist = used ? dsum / static_cast<double>(used) : 0.0;
      if (mean_dist > 0.0) acc += lap[j].norm() / mean_dist;
    }
    m.curv_dev_pct = 100.0 * acc / static_cast<double>(K);

    // Per-cluster MSTs; when every cluster holds a single node the whole node set is one region.
    std::map<int, std::vector<Vec3>> groups;
    for (std::size_t j = 0; j < K; ++j) {
      const int c = j < skel.cluster_of_node.size() ? skel.cluster_of_node[j] : -1;
      groups[c].push_back(skel.nodes[j]);
    }
    std::vector<double> edges;
    for (const auto& [c, pts] : groups) {
      const auto e = mst_edge_lengths(pts);
      edges.insert(edges.end(), e.begin(), e.end());
    }
    if (edges.empty()) edges = mst_edge_lengths(skel.nodes);
    const double limit = cfg.connectivity_eta * median(edges);
    const auto valid = std::count_if(edges.begin(), edges.end(), [&](double e) { return e <= limit; });
    m.connectivity = static_cast<double>(valid) / static_cast<double>(edges.size());
  }

  if (reference != nullptr) {
    std::vector<Vec3> ref;
    for (const auto& line : *reference) ref.insert(ref.end(), line.begin(), line.end());
    m.hausdorff = hausdorff_distance(skel.nodes, ref);
  }
  return m;
}

}  // namespace gsfuse
