#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "gsfuse/gafeat.hpp"
#include "gsfuse/gs_model.hpp"
#include "gsfuse/skeleton.hpp"
#include "gsfuse/transform.hpp"

namespace gsfuse {

struct RegistrationConfig {
  double match_ratio_test = 0.9;
  int ransac_iters = 2000;
  double inlier_tol = 0.05;  // m, in A's frame
  int min_inliers = 10;
  std::uint64_t seed = 7;

  void validate() const;
};

/// A putative correspondence between primitive `a` of sub-map A and primitive `b` of sub-map B.
struct Match {
  std::size_t a = 0;
  std::size_t b = 0;

  auto operator<=>(const Match&) const = default;
};

/// Mutual nearest neighbours between descriptor rows that pass the ratio test
/// d1 <= ratio * d2 on A's side. Sorted by (a, b). Throws RegistrationError below 3 matches.
std::vector<Match> match_features(const FeatureMatrix& fa, const FeatureMatrix& fb, const RegistrationConfig& cfg);
std::vector<Match> match_features(const FeatureField& fa, const FeatureField& fb, const RegistrationConfig& cfg);

/// Closed-form least-squares similarity with dst ~ s R src + t. Throws RegistrationError for
/// fewer than 3 pairs or a collinear / rank-deficient configuration.
SimilarityTransform umeyama_similarity(std::span<const Vec3> src, std::span<const Vec3> dst);
SimilarityTransform umeyama_similarity(const std::vector<std::pair<Vec3, Vec3>>& pairs);

struct RansacResult {
  SimilarityTransform transform;  // maps B into A
  std::vector<bool> inlier_mask;  // aligned with the input match order
  std::size_t inlier_count = 0;
};

/// 3-point RANSAC over similarity hypotheses, then re-fit on all inliers.
/// Throws RegistrationError when fewer than min_inliers inliers remain.
RansacResult ransac_register(const std::vector<Match>& matches, const GaussianModel& a, const GaussianModel& b,
                             const RegistrationConfig& cfg);
/// Same on explicit point lists (match.a indexes dst_a, match.b indexes src_b).
RansacResult ransac_register_points(const std::vector<Match>& matches, std::span<const Vec3> dst_a,
                                    std::span<const Vec3> src_b, const RegistrationConfig& cfg);

struct RegistrationErrors {
  double rre_deg = 0.0;
  double rte_m = 0.0;
  double rse = 0.0;
};

/// Geodesic rotation angle (degrees), translation distance and relative scale error.
RegistrationErrors registration_errors(const SimilarityTransform& est, const SimilarityTransform& gt);

struct RegistrationOutcome {
  SimilarityTransform transform;
  std::size_t match_count = 0;
  std::size_t inlier_count = 0;
  bool used_skeleton_fallback = false;
};

/// Features, matching and RANSAC on primitives; on failure falls back to skeleton nodes with
/// node descriptors averaged over their assigned primitives.
RegistrationOutcome register_submaps(const GaussianModel& a, const GaussianModel& b, const ConvConfig& conv,
                                     const RegistrationConfig& reg, const SkeletonConfig& skeleton);
/// As above with precomputed feature fields.
RegistrationOutcome register_submaps(const GaussianModel& a, const GaussianModel& b, const FeatureField& fa,
                                     const FeatureField& fb, const RegistrationConfig& reg,
                                     const SkeletonConfig& skeleton);

}  // namespace gsfuse
