#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "gsfuse/gs_model.hpp"

namespace gsfuse {

/// Parameters of skeleton initialisation, refinement and metrics.
struct SkeletonConfig {
  double dbscan_eps = 0.5;   // m
  int dbscan_min_pts = 4;    // other Gaussians required in an eps-ball for a core point
  double lambda = 0.1;       // curvature regulariser weight
  double step_size = 0.05;   // m, largest displacement any node may take in one iteration
  double conv_tol = 1e-4;    // m
  std::optional<double> merge_dist;  // m, defaults to dbscan_eps / 2
  int max_iters = 500;
  int laplacian_k = 2;
  double connectivity_eta = 3.0;

  double merge_distance() const { return merge_dist.value_or(dbscan_eps / 2.0); }
  /// Throws ConfigError on out-of-range values.
  void validate() const;
};

struct Skeleton {
  std::vector<Vec3> nodes;
  std::vector<std::size_t> assignment;  // primitive -> node
  std::vector<int> cluster_of_node;     // node -> DBSCAN cluster id

  std::size_t size() const { return nodes.size(); }
};

/// Which data term drives assignment and refinement.
enum class DataTerm {
  GaussianAware,  // per-primitive covariance (G2D density)
  Euclidean,      // covariance-blind baseline: one isotropic bandwidth for every primitive
};

/// DBSCAN on points under Euclidean distance. A point is core when at least `min_pts`
/// OTHER points lie within `eps` (inclusive). Labels are cluster ids in discovery order
/// (scanning points by index); -1 marks noise.
std::vector<int> dbscan_labels(std::span<const Vec3> points, double eps, int min_pts);

/// One node per DBSCAN cluster at the opacity-weighted mean of its members.
/// Noise primitives are assigned to the nearest node. Throws DegenerateInputError when
/// every primitive is noise.
Skeleton dbscan_init(const GaussianModel& model, const SkeletonConfig& cfg);

/// Unnormalised density exp(-1/2 (q - mu)^T Sigma^-1 (q - mu)).
double gaussian_density(const GaussianPrimitive& p, const Vec3& q);

/// Gaussian-to-skeleton value as printed: the minimum over nodes of the summed densities of
/// the Gaussians assigned to that node, evaluated at that node.
double g2d_distance(const GaussianModel& model, const Skeleton& skel);

/// Discrete Laplacian q_j - mean(k nearest other nodes), k = min(laplacian_k, K-1).
std::vector<Vec3> node_laplacians(std::span<const Vec3> nodes, int laplacian_k);

/// E = -sum_i density(h_i, q_assign(i)) + lambda * sum_j |Lap(q_j)|^2 (Gaussian-aware term).
double energy(const Skeleton& skel, const GaussianModel& model, const SkeletonConfig& cfg);
/// Same energy with the chosen data term.
double energy(const Skeleton& skel, const GaussianModel& model, const SkeletonConfig& cfg, DataTerm term);

struct RefineTrace {
  std::vector<double> energy;            // entry 0 is the energy before the first update
  std::vector<double> max_displacement;  // per iteration
  std::vector<std::size_t> topology_changes;  // iterations in which nodes were merged or dropped
  int iterations = 0;
  bool converged = false;
  std::size_t dropped_empty = 0;  // memberless nodes removed after the last iteration
  double final_energy = 0.0;      // energy of the returned skeleton
};

struct RefineResult {
  Skeleton skeleton;
  RefineTrace trace;
};

/// Merges nodes closer than merge_distance(), then alternates a backtracking gradient step on
/// the energy (rejecting steps that bring nodes closer than merge_distance()) with greedy
/// reassignment, until max displacement < conv_tol. Memberless nodes are dropped at the end.
RefineResult refine(Skeleton skel, const GaussianModel& model, const SkeletonConfig& cfg,
                    DataTerm term = DataTerm::GaussianAware);

/// DBSCAN init followed by Gaussian-aware refinement.
RefineResult extract_skeleton(const GaussianModel& model, const SkeletonConfig& cfg);

/// Covariance-blind baseline: identical pipeline with the Euclidean data term.
RefineResult l1_baseline(const GaussianModel& model, const SkeletonConfig& cfg);

/// Isotropic bandwidth used by the Euclidean data term: the median per-primitive
/// geometric-mean standard deviation.
double euclidean_bandwidth(const GaussianModel& model);

using Polyline = std::vector<Vec3>;

struct SkeletonMetrics {
  double curv_dev_pct = 0.0;
  double connectivity = 1.0;
  std::optional<double> hausdorff;
};

/// Curvature deviation, MST-based connectivity and (when a reference is given) the symmetric
/// Hausdorff distance between the node set and the reference polyline vertices.
SkeletonMetrics skeleton_metrics(const Skeleton& skel, const SkeletonConfig& cfg,
                                 const std::vector<Polyline>* reference = nullptr);

/// Symmetric Hausdorff distance between two point sets.
double hausdorff_distance(std::span<const Vec3> a, std::span<const Vec3> b);

/// Resamples polylines so that consecutive samples are at most `spacing` apart.
std::vector<Vec3> sample_polylines(const std::vector<Polyline>& lines, double spacing);

}  // namespace gsfuse
