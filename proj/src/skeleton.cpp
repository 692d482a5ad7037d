#include "gsfuse/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>

#include "gsfuse/error.hpp"
#include "gsfuse/kdtree.hpp"
#include "gsfuse/parallel.hpp"

namespace gsfuse {

void SkeletonConfig::validate() const {
  const auto bad = [](const std::string& what) { throw ConfigError("skeleton config: " + what); };
  if (!(dbscan_eps > 0.0)) bad("dbscan_eps must be > 0");
  if (dbscan_min_pts < 0) bad("dbscan_min_pts must be >= 0");
  if (!(lambda >= 0.0)) bad("lambda must be >= 0");
  if (!(step_size > 0.0)) bad("step_size must be > 0");
  if (!(conv_tol > 0.0)) bad("conv_tol must be > 0");
  if (!(merge_distance() > 0.0)) bad("merge_dist must be > 0");
  if (max_iters < 1) bad("max_iters must be >= 1");
  if (laplacian_k < 2) bad("laplacian_k must be >= 2");
  if (!(connectivity_eta > 0.0)) bad("connectivity_eta must be > 0");
}

// ---------------------------------------------------------------------------
// DBSCAN

std::vector<int> dbscan_labels(std::span<const Vec3> points, double eps, int min_pts) {
  constexpr int kUnvisited = -2;
  constexpr int kNoise = -1;
  std::vector<int> labels(points.size(), kUnvisited);
  if (points.empty()) return labels;

  const KdTree tree(points);
  std::vector<std::size_t> region;
  std::vector<std::size_t> queue;
  int cluster = 0;
  const auto is_core = [&](std::size_t n_in_ball) { return n_in_ball >= static_cast<std::size_t>(min_pts) + 1; };

  for (std::size_t i = 0; i < points.size(); ++i) {
    if (labels[i] != kUnvisited) continue;
    tree.radius(points[i], eps, region);
    if (!is_core(region.size())) {
      labels[i] = kNoise;
      continue;
    }
    labels[i] = cluster;
    queue.clear();
    for (std::size_t n : region) {
      if (labels[n] == kUnvisited) {
        labels[n] = cluster;
        queue.push_back(n);
      } else if (labels[n] == kNoise) {
        labels[n] = cluster;  // border point
      }
    }
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::size_t s = queue[head];
      tree.radius(points[s], eps, region);
      if (!is_core(region.size())) continue;
      for (std::size_t n : region) {
        if (labels[n] == kUnvisited) {
          labels[n] = cluster;
          queue.push_back(n);
        } else if (labels[n] == kNoise) {
          labels[n] = cluster;
        }
      }
    }
    ++cluster;
  }
  return labels;
}

Skeleton dbscan_init(const GaussianModel& model, const SkeletonConfig& cfg) {
  cfg.validate();
  if (model.empty()) throw DegenerateInputError("cannot build a skeleton of an empty model");
  const std::vector<Vec3> means = model.means();
  const std::vector<int> labels = dbscan_labels(means, cfg.dbscan_eps, cfg.dbscan_min_pts);
  const int clusters = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  if (clusters <= 0) {
    throw DegenerateInputError("DBSCAN labelled every primitive as noise (eps=" + std::to_string(cfg.dbscan_eps) +
                               ", minPts=" + std::to_string(cfg.dbscan_min_pts) +
                               "); increase dbscan_eps or decrease dbscan_min_pts");
  }

  std::vector<Vec3> acc(static_cast<std::size_t>(clusters), Vec3::Zero());
  std::vector<double> wsum(static_cast<std::size_t>(clusters), 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(clusters), 0);
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (labels[i] < 0) continue;
    const auto c = static_cast<std::size_t>(labels[i]);
    const double w = opacity(model[i]);
    acc[c] += w * means[i];
    wsum[c] += w;
    ++count[c];
  }
  Skeleton skel;
  for (int c = 0; c < clusters; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    skel.nodes.push_back(wsum[cc] > 0.0 ? Vec3(acc[cc] / wsum[cc]) : Vec3(acc[cc] / static_cast<double>(count[cc])));
    skel.cluster_of_node.push_back(c);
  }
  skel.assignment.resize(means.size());
  const KdTree node_tree(skel.nodes);
  for (std::size_t i = 0; i < means.size(); ++i) {
    skel.assignment[i] =
        labels[i] >= 0 ? static_cast<std::size_t>(labels[i]) : node_tree.nearest(means[i]).index;
  }
  return skel;
}

// ---------------------------------------------------------------------------
// Densities and energy

double gaussian_density(const GaussianPrimitive& p, const Vec3& q) {
  const GaussianGeometry g = geometry(p);
  return std::exp(-0.5 * g.mahalanobis_sq(q - p.mean));
}

double g2d_distance(const GaussianModel& model, const Skeleton& skel) {
  if (skel.nodes.empty()) throw DegenerateInputError("g2d_distance on an empty skeleton");
  std::vector<double> sums(skel.nodes.size(), 0.0);
  for (std::size_t i = 0; i < model.size(); ++i) {
    const std::size_t j = skel.assignment.at(i);
    sums.at(j) += gaussian_density(model[i], skel.nodes[j]);
  }
  return *std::min_element(sums.begin(), sums.end());
}

namespace {

std::vector<std::vector<std::size_t>> node_neighbor_sets(std::span<const Vec3> nodes, int laplacian_k) {
  const std::size_t K = nodes.size();
  std::vector<std::vector<std::size_t>> out(K);
  if (K < 2) return out;
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(laplacian_k), K - 1);
  const KdTree tree(nodes);
  for (std::size_t j = 0; j < K; ++j) {
    const auto nn = tree.knn(nodes[j], k + 1);
    for (const auto& n : nn) {
      if (n.index == j) continue;
      if (out[j].size() < k) out[j].push_back(n.index);
    }
  }
  return out;
}

std::vector<Vec3> laplacians_from_sets(std::span<const Vec3> nodes, const std::vector<std::vector<std::size_t>>& sets) {
  std::vector<Vec3> lap(nodes.size(), Vec3::Zero());
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    if (sets[j].empty()) continue;
    Vec3 m = Vec3::Zero();
    for (std::size_t l : sets[j]) m += nodes[l];
    lap[j] = nodes[j] - m / static_cast<double>(sets[j].size());
  }
  return lap;
}

/// Per-primitive quadratic forms used by the data term.
struct DataModel {
  std::vector<Vec3> means;
  std::vector<Mat3> precision;
  std::vector<double> lambda_max;  // largest covariance eigenvalue, bounds Euclidean reach
};

DataModel make_data_model(const GaussianModel& model, DataTerm term) {
  DataModel dm;
  dm.means = model.means();
  dm.precision.resize(model.size());
  dm.lambda_max.resize(model.size());
  if (term == DataTerm::GaussianAware) {
    for (std::size_t i = 0; i < model.size(); ++i) {
      const GaussianGeometry g = geometry(model[i]);
      dm.precision[i] = g.precision;
      dm.lambda_max[i] = g.lambda_max;
    }
  } else {
    const double h = euclidean_bandwidth(model);
    const double var = std::max(h * h, kCovarianceFloor);
    std::fill(dm.precision.begin(), dm.precision.end(), Mat3(Mat3::Identity() / var));
    std::fill(dm.lambda_max.begin(), dm.lambda_max.end(), var);
  }
  return dm;
}

double data_term(const DataModel& dm, std::span<const Vec3> nodes, const std::vector<std::size_t>& assignment) {
  double e = 0.0;
  for (std::size_t i = 0; i < dm.means.size(); ++i) {
    const Vec3 d = nodes[assignment[i]] - dm.means[i];
    e -= std::exp(-0.5 * d.dot(dm.precision[i] * d));
  }
  return e;
}

double regulariser(std::span<const Vec3> nodes, int laplacian_k) {
  double r = 0.0;
  for (const Vec3& l : node_laplacians(nodes, laplacian_k)) r += l.squaredNorm();
  return r;
}

double total_energy(const DataModel& dm, std::span<const Vec3> nodes, const std::vector<std::size_t>& assignment,
                    const SkeletonConfig& cfg) {
  double e = data_term(dm, nodes, assignment);
  if (cfg.lambda > 0.0) e += cfg.lambda * regulariser(nodes, cfg.laplacian_k);
  return e;
}

/// Assigns each primitive to the node with the smallest quadratic form (largest density);
/// ties go to the lower node index.
void reassign(const DataModel& dm, Skeleton& skel) {
  const KdTree tree(skel.nodes);
  skel.assignment.resize(dm.means.size());
  parallel_for(dm.means.size(), [&](std::size_t i) {
    thread_local std::vector<Neighbor> cand;
    const Vec3& mu = dm.means[i];
    const Mat3& P = dm.precision[i];
    const Neighbor nn = tree.nearest(mu);
    std::size_t best = nn.index;
    Vec3 d = skel.nodes[best] - mu;
    double best_m = d.dot(P * d);
    // Any node with a smaller quadratic form lies within sqrt(best_m * lambda_max) of mu.
    const double reach = std::sqrt(best_m * dm.lambda_max[i]) * (1.0 + 1e-12) + 1e-15;
    tree.radius_neighbors(mu, reach, cand);
    for (const auto& c : cand) {
      d = skel.nodes[c.index] - mu;
      const double m = d.dot(P * d);
      if (m < best_m || (m == best_m && c.index < best)) {
        best_m = m;
        best = c.index;
      }
    }
    skel.assignment[i] = best;
  });
}

/// Removes nodes without members. Returns true if any node was removed.
bool drop_empty_nodes(Skeleton& skel) {
  std::vector<std::size_t> members(skel.nodes.size(), 0);
  for (std::size_t a : skel.assignment) ++members[a];
  if (std::all_of(members.begin(), members.end(), [](std::size_t m) { return m > 0; })) return false;
  std::vector<std::size_t> remap(skel.nodes.size(), 0);
  Skeleton out;
  for (std::size_t j = 0; j < skel.nodes.size(); ++j) {
    if (members[j] == 0) continue;
    remap[j] = out.nodes.size();
    out.nodes.push_back(skel.nodes[j]);
    out.cluster_of_node.push_back(skel.cluster_of_node[j]);
  }
  out.assignment.reserve(skel.assignment.size());
  for (std::size_t a : skel.assignment) out.assignment.push_back(remap[a]);
  skel = std::move(out);
  return true;
}

/// Repeatedly replaces node pairs closer than `dist` by their midpoint, closest pairs first.
/// The merged node keeps the lower index and its cluster id. Returns true if anything merged.
bool merge_close_nodes(Skeleton& skel, double dist) {
  bool any = false;
  std::vector<Neighbor> near;
  while (skel.nodes.size() > 1) {
    const KdTree tree(skel.nodes);
    std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < skel.nodes.size(); ++a) {
      tree.radius_neighbors(skel.nodes[a], dist, near);
      for (const auto& n : near) {
        if (n.index > a && n.dist_sq < dist * dist) pairs.emplace_back(n.dist_sq, a, n.index);
      }
    }
    if (pairs.empty()) break;
    std::sort(pairs.begin(), pairs.end());
    std::vector<bool> used(skel.nodes.size(), false);
    std::vector<std::size_t> target(skel.nodes.size());
    std::iota(target.begin(), target.end(), std::size_t{0});
    std::vector<bool> removed(skel.nodes.size(), false);
    for (const auto& [d, a, b] : pairs) {
      if (used[a] || used[b]) continue;
      used[a] = used[b] = true;
      skel.nodes[a] = 0.5 * (skel.nodes[a] + skel.nodes[b]);
      target[b] = a;
      removed[b] = true;
    }
    std::vector<std::size_t> remap(skel.nodes.size(), 0);
    Skeleton out;
    for (std::size_t j = 0; j < skel.nodes.size(); ++j) {
      if (removed[j]) continue;
      remap[j] = out.nodes.size();
      out.nodes.push_back(skel.nodes[j]);
      out.cluster_of_node.push_back(skel.cluster_of_node[j]);
    }
    out.assignment.reserve(skel.assignment.size());
    for (std::size_t a : skel.assignment) out.assignment.push_back(remap[target[a]]);
    skel = std::move(out);
    any = true;
  }
  return any;
}

bool nodes_separated(const std::vector<Vec3>& nodes, double dist) {
  if (nodes.size() < 2) return true;
  const KdTree tree(nodes);
  std::vector<Neighbor> near;
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    tree.radius_neighbors(nodes[a], dist, near);
    for (const auto& n : near) {
      if (n.index != a && n.dist_sq < dist * dist) return false;
    }
  }
  return true;
}

}  // namespace

std::vector<Vec3> node_laplacians(std::span<const Vec3> nodes, int laplacian_k) {
  return laplacians_from_sets(nodes, node_neighbor_sets(nodes, laplacian_k));
}

double energy(const Skeleton& skel, const GaussianModel& model, const SkeletonConfig& cfg, DataTerm term) {
  if (skel.assignment.size() != model.size()) throw ValidationError("skeleton assignment does not match model size");
  for (std::size_t a : skel.assignment) {
    if (a >= skel.nodes.size()) throw ValidationError("skeleton assignment references a missing node");
  }
  const DataModel dm = make_data_model(model, term);
  return total_energy(dm, skel.nodes, skel.assignment, cfg);
}

double energy(const Skeleton& skel, const GaussianModel& model, const SkeletonConfig& cfg) {
  return energy(skel, model, cfg, DataTerm::GaussianAware);
}

double euclidean_bandwidth(const GaussianModel& model) {
  if (model.empty()) return 1.0;
  std::vector<double> s(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) s[i] = std::exp(model[i].log_scale.mean());
  auto mid = s.begin() + static_cast<std::ptrdiff_t>(s.size() / 2);
  std::nth_element(s.begin(), mid, s.end());
  return *mid;
}

// ---------------------------------------------------------------------------
// Refinement

RefineResult refine(Skeleton skel, const GaussianModel& model, const SkeletonConfig& cfg, DataTerm term) {
  cfg.validate();
  if (model.empty()) throw DegenerateInputError("cannot refine a skeleton of an empty model");
  if (skel.nodes.empty()) throw DegenerateInputError("cannot refine an empty skeleton");
  if (skel.cluster_of_node.size() != skel.nodes.size()) skel.cluster_of_node.resize(skel.nodes.size(), -1);

  const DataModel dm = make_data_model(model, term);
  const double merge_dist = cfg.merge_distance();

  RefineResult result;
  RefineTrace& trace = result.trace;

  // Topology is settled before the trace starts: steps that would bring two nodes closer than
  // merge_dist are rejected below, so no merge is needed later and the energy never jumps.
  bool initial_change = merge_close_nodes(skel, merge_dist);
  reassign(dm, skel);
  initial_change = drop_empty_nodes(skel) || initial_change;
  if (initial_change) trace.topology_changes.push_back(0);
  double E = total_energy(dm, skel.nodes, skel.assignment, cfg);
  trace.energy.push_back(E);

  for (int it = 1; it <= cfg.max_iters; ++it) {
    const std::size_t K = skel.nodes.size();

    // Gradient and a per-node curvature estimate (Gauss-Newton part of the data term plus the
    // diagonal of the regulariser), giving a preconditioned descent direction.
    std::vector<Vec3> grad(K, Vec3::Zero());
    std::vector<Mat3> hess(K, Mat3::Zero());
    for (std::size_t i = 0; i < dm.means.size(); ++i) {
      const std::size_t j = skel.assignment[i];
      const Vec3 d = skel.nodes[j] - dm.means[i];
      const Vec3 Pd = dm.precision[i] * d;
      const double rho = std::exp(-0.5 * d.dot(Pd));
      grad[j] += rho * Pd;
      hess[j] += rho * dm.precision[i];
    }
    if (cfg.lambda > 0.0 && K > 1) {
      const auto sets = node_neighbor_sets(skel.nodes, cfg.laplacian_k);
      const auto lap = laplacians_from_sets(skel.nodes, sets);
      std::vector<double> diag(K, 1.0);
      for (std::size_t j = 0; j < K; ++j) {
        grad[j] += 2.0 * cfg.lambda * lap[j];
        const double inv_k = 1.0 / static_cast<double>(sets[j].size());
        for (std::size_t l : sets[j]) {
          grad[l] -= 2.0 * cfg.lambda * inv_k * lap[j];
          diag[l] += inv_k * inv_k;
        }
      }
      for (std::size_t j = 0; j < K; ++j) hess[j] += 2.0 * cfg.lambda * diag[j] * Mat3::Identity();
    }

    std::vector<Vec3> dir(K, Vec3::Zero());
    for (std::size_t j = 0; j < K; ++j) {
      if (grad[j].squaredNorm() == 0.0) continue;
      const double ridge = 1e-9 * (hess[j].trace() + 1.0);
      Vec3 step = -(hess[j] + ridge * Mat3::Identity()).ldlt().solve(grad[j]);
      if (!step.allFinite() || step.dot(grad[j]) >= 0.0) step = -grad[j];
      const double n = step.norm();
      if (n > cfg.step_size) step *= cfg.step_size / n;
      dir[j] = step;
    }

    // Backtracking: halve until the energy decreases with all nodes still merge_dist apart.
    double alpha = 1.0;
    double displacement = 0.0;
    std::vector<Vec3> trial(K);
    for (int halving = 0; halving < 40; ++halving, alpha *= 0.5) {
      double max_move = 0.0;
      for (std::size_t j = 0; j < K; ++j) {
        trial[j] = skel.nodes[j] + alpha * dir[j];
        max_move = std::max(max_move, (alpha * dir[j]).norm());
      }
      if (max_move == 0.0) break;
      const double Et = total_energy(dm, trial, skel.assignment, cfg);
      if (Et < E && nodes_separated(trial, merge_dist)) {
        skel.nodes = trial;
        displacement = max_move;
        E = Et;
        break;
      }
      if (max_move < 1e-3 * cfg.conv_tol) break;
    }

    // Greedy reassignment never increases the data term and leaves the regulariser unchanged.
    reassign(dm, skel);
    E = total_energy(dm, skel.nodes, skel.assignment, cfg);

    trace.energy.push_back(E);
    trace.max_displacement.push_back(displacement);
    trace.iterations = it;
    if (displacement < cfg.conv_tol) {
      trace.converged = true;
      break;
    }
  }
  trace.dropped_empty = skel.nodes.size();
  drop_empty_nodes(skel);
  trace.dropped_empty -= skel.nodes.size();
  trace.final_energy = total_energy(dm, skel.nodes, skel.assignment, cfg);
  result.skeleton = std::move(skel);
  return result;
}

RefineResult extract_skeleton(const GaussianModel& model, const SkeletonConfig& cfg) {
  return refine(dbscan_init(model, cfg), model, cfg, DataTerm::GaussianAware);
}

RefineResult l1_baseline(const GaussianModel& model, const SkeletonConfig& cfg) {
  return refine(dbscan_init(model, cfg), model, cfg, DataTerm::Euclidean);
}

}  // namespace gsfuse
