#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "gsfuse/gafeat.hpp"
#include "gsfuse/gs_model.hpp"
#include "gsfuse/skeleton.hpp"

namespace gsfuse {

struct FusionConfig {
  std::optional<double> eps_skel;     // m; defaults to the skeleton merge distance
  std::optional<double> eps_overlap;  // m; defaults to the median nearest-neighbour spacing of A
  double delta = 1.0;                 // 1/m
  double alpha = 0.4;
  double beta = 0.4;
  double gamma = 0.2;
  double tau = 0.9;
  /// Reproduce the printed total score alpha*S_ske + beta*S_deta + gamma*S_ske.
  bool gamma_on_skeleton = false;

  void validate() const;
  /// alpha = beta = 0, gamma = 1 and the threshold override disabled.
  static FusionConfig center_proximity_baseline(const FusionConfig& base);
};

/// Which input model a primitive belongs to.
enum class Owner { A, B };

struct Scores {
  double s_ske = 0.0;
  double s_deta = 0.0;
  double s_cen = 0.0;
  double s_tot = 0.0;
};

struct PairRecord {
  std::size_t index_a = 0;
  std::size_t index_b = 0;
  Scores score_a;
  Scores score_b;
  bool kept_a = true;
};

struct FusionReport {
  Skeleton merged_skeleton;
  std::size_t kept_from_a = 0;
  std::size_t kept_from_b = 0;
  std::size_t dropped = 0;
  double eps_skel = 0.0;
  double eps_overlap = 0.0;
  double detail_min = 0.0;
  double detail_max = 0.0;
  std::vector<PairRecord> pairs;
};

/// Midpoint-merges each node of `sa` with the first unconsumed node of `sb` closer than eps_skel;
/// unmerged nodes of both are appended unchanged. The result carries no assignment.
Skeleton merge_skeletons(const Skeleton& sa, const Skeleton& sb, double eps_skel);

/// Mutual-nearest-neighbour pairs (i in A, j in B) with |mu_i - mu_j| <= eps_overlap, sorted by i.
std::vector<std::pair<std::size_t, std::size_t>> overlap_pairs(const GaussianModel& a, const GaussianModel& b,
                                                               double eps_overlap);

/// Normalisation context shared by every score in one fusion run.
struct ScoreContext {
  const KdTree* skeleton_tree = nullptr;  // over the merged skeleton nodes
  Vec3 center_a, center_b;
  double radius_a = 1.0, radius_b = 1.0;
  double detail_min = 0.0, detail_max = 0.0;  // S_deta := 0 when detail_max <= detail_min
};

Scores score(const Vec3& mean, double detail, Owner owner, const ScoreContext& ctx, const FusionConfig& cfg);

/// True when the A member of a pair is kept.
bool keep_a(const Scores& a, const Scores& b, const FusionConfig& cfg);

struct FusionResult {
  GaussianModel model;
  FusionReport report;
};

/// Exclusive primitives of both models plus one primitive per overlap pair. Output order: A's
/// primitives in index order (with B's winner in place of a dropped A member), then unpaired B.
FusionResult fuse(const GaussianModel& a, const GaussianModel& b_registered, const Skeleton& skel_a,
                  const Skeleton& skel_b_registered, const FeatureField& feat_a, const FeatureField& feat_b,
                  const FusionConfig& cfg, double default_eps_skel);

}  // namespace gsfuse
