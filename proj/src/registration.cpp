#include "gsfuse/registration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/SVD>

#include "gsfuse/error.hpp"
#include "gsfuse/parallel.hpp"
#include "gsfuse/random.hpp"

namespace gsfuse {

void RegistrationConfig::validate() const {
  if (!(match_ratio_test > 0.0 && match_ratio_test <= 1.0))
    throw ConfigError("registration config: match_ratio_test must be in (0, 1]");
  if (ransac_iters < 1) throw ConfigError("registration config: ransac_iters must be >= 1");
  if (!(inlier_tol > 0.0)) throw ConfigError("registration config: inlier_tol must be > 0");
  if (min_inliers < 1) throw ConfigError("registration config: min_inliers must be >= 1");
}

// ---------------------------------------------------------------------------
// Matching

std::vector<Match> match_features(const FeatureMatrix& fa, const FeatureMatrix& fb, const RegistrationConfig& cfg) {
  cfg.validate();
  if (fa.cols() != fb.cols()) {
    throw ConfigError("match_features: descriptor dimensions differ (" + std::to_string(fa.cols()) + " vs " +
                      std::to_string(fb.cols()) + "); features must come from the same convolution config");
  }
  const Eigen::Index na = fa.rows(), nb = fb.rows();
  if (na == 0 || nb == 0) throw RegistrationError("match_features: empty feature field");

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> best_a(static_cast<std::size_t>(na), inf), second_a(static_cast<std::size_t>(na), inf);
  std::vector<Eigen::Index> arg_a(static_cast<std::size_t>(na), -1);
  std::vector<double> best_b(static_cast<std::size_t>(nb), inf);
  std::vector<Eigen::Index> arg_b(static_cast<std::size_t>(nb), -1);

  const Eigen::VectorXd sq_a = fa.rowwise().squaredNorm();
  const Eigen::VectorXd sq_b = fb.rowwise().squaredNorm();
  const Eigen::MatrixXd fb_t = fb.transpose();

  // Squared distances |a|^2 + |b|^2 - 2 a.b evaluated block-wise.
  constexpr Eigen::Index kRows = 256, kCols = 4096;
  Eigen::MatrixXd block;
  for (Eigen::Index c0 = 0; c0 < nb; c0 += kCols) {
    const Eigen::Index cn = std::min(kCols, nb - c0);
    for (Eigen::Index r0 = 0; r0 < na; r0 += kRows) {
      const Eigen::Index rn = std::min(kRows, na - r0);
      block.noalias() = fa.middleRows(r0, rn) * fb_t.middleCols(c0, cn);
      for (Eigen::Index r = 0; r < rn; ++r) {
        const auto ia = static_cast<std::size_t>(r0 + r);
        for (Eigen::Index c = 0; c < cn; ++c) {
          const auto ib = static_cast<std::size_t>(c0 + c);
          const double d = std::max(0.0, sq_a[r0 + r] + sq_b[c0 + c] - 2.0 * block(r, c));
          if (d < best_a[ia]) {
            second_a[ia] = best_a[ia];
            best_a[ia] = d;
            arg_a[ia] = c0 + c;
          } else if (d < second_a[ia]) {
            second_a[ia] = d;
          }
          if (d < best_b[ib]) {  // rows are scanned in increasing order, so ties keep the lower index
            best_b[ib] = d;
            arg_b[ib] = r0 + r;
          }
        }
      }
    }
  }

  std::vector<Match> out;
  const double ratio_sq = cfg.match_ratio_test * cfg.match_ratio_test;
  for (Eigen::Index i = 0; i < na; ++i) {
    const auto ia = static_cast<std::size_t>(i);
    const Eigen::Index j = arg_a[ia];
    if (j < 0 || arg_b[static_cast<std::size_t>(j)] != i) continue;
    if (std::isfinite(second_a[ia]) && best_a[ia] > ratio_sq * second_a[ia]) continue;
    out.push_back({ia, static_cast<std::size_t>(j)});
  }
  if (out.size() < 3) {
    throw RegistrationError("match_features: only " + std::to_string(out.size()) +
                            " mutual matches passed the ratio test (need >= 3)");
  }
  return out;
}

std::vector<Match> match_features(const FeatureField& fa, const FeatureField& fb, const RegistrationConfig& cfg) {
  return match_features(fa.descriptor(), fb.descriptor(), cfg);
}

// ---------------------------------------------------------------------------
// Closed-form similarity

SimilarityTransform umeyama_similarity(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) throw ConfigError("umeyama_similarity: point lists differ in length");
  const std::size_t n = src.size();
  if (n < 3) throw RegistrationError("umeyama_similarity: need at least 3 point pairs");

  Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
  for (std::size_t k = 0; k < n; ++k) {
    mu_s += src[k];
    mu_d += dst[k];
  }
  mu_s /= static_cast<double>(n);
  mu_d /= static_cast<double>(n);

  double var_s = 0.0;
  Mat3 cov = Mat3::Zero();
  for (std::size_t k = 0; k < n; ++k) {
    const Vec3 xs = src[k] - mu_s;
    const Vec3 xd = dst[k] - mu_d;
    var_s += xs.squaredNorm();
    cov += xd * xs.transpose();
  }
  var_s /= static_cast<double>(n);
  cov /= static_cast<double>(n);

  const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 D = svd.singularValues();
  if (!(var_s > 0.0) || !(D[0] > 0.0) || D[1] <= 1e-10 * D[0]) {
    throw RegistrationError("umeyama_similarity: degenerate (collinear or coincident) point configuration");
  }
  Vec3 S = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) S[2] = -1.0;

  SimilarityTransform T;
  T.rotation = svd.matrixU() * S.asDiagonal() * svd.matrixV().transpose();
  T.scale = D.dot(S) / var_s;
  T.translation = mu_d - T.scale * (T.rotation * mu_s);
  if (!(T.scale > 0.0)) throw RegistrationError("umeyama_similarity: non-positive scale estimate");
  return T;
}

SimilarityTransform umeyama_similarity(const std::vector<std::pair<Vec3, Vec3>>& pairs) {
  std::vector<Vec3> src, dst;
  src.reserve(pairs.size());
  dst.reserve(pairs.size());
  for (const auto& [s, d] : pairs) {
    src.push_back(s);
    dst.push_back(d);
  }
  return umeyama_similarity(src, dst);
}

// ---------------------------------------------------------------------------
// RANSAC

namespace {

std::size_t count_inliers(const SimilarityTransform& T, std::span<const Vec3> src, std::span<const Vec3> dst,
                          double tol_sq, std::vector<bool>* mask) {
  std::size_t n = 0;
  for (std::size_t k = 0; k < src.size(); ++k) {
    const bool in = (T.apply(src[k]) - dst[k]).squaredNorm() <= tol_sq;
    if (mask) (*mask)[k] = in;
    n += in;
  }
  return n;
}

}  // namespace

RansacResult ransac_register_points(const std::vector<Match>& matches, std::span<const Vec3> dst_a,
                                    std::span<const Vec3> src_b, const RegistrationConfig& cfg) {
  cfg.validate();
  if (matches.size() < 3) {
    throw RegistrationError("ransac_register: need at least 3 matches, got " + std::to_string(matches.size()));
  }
  // Canonical order makes the result independent of the caller's match order.
  std::vector<std::size_t> order(matches.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return matches[x] < matches[y]; });
  std::vector<Vec3> src(matches.size()), dst(matches.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Match& m = matches[order[k]];
    if (m.a >= dst_a.size() || m.b >= src_b.size()) throw ConfigError("ransac_register: match index out of range");
    dst[k] = dst_a[m.a];
    src[k] = src_b[m.b];
  }

  const double tol_sq = cfg.inlier_tol * cfg.inlier_tol;
  const std::size_t n = src.size();
  const auto iters = static_cast<std::size_t>(cfg.ransac_iters);
  std::vector<std::size_t> score(iters, 0);
  parallel_for(iters, [&](std::size_t it) {
    Rng rng(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(it) + 1));
    std::size_t s[3];
    s[0] = rng.below(n);
    do s[1] = rng.below(n); while (s[1] == s[0]);
    do s[2] = rng.below(n); while (s[2] == s[0] || s[2] == s[1]);
    const Vec3 ps[3] = {src[s[0]], src[s[1]], src[s[2]]};
    const Vec3 pd[3] = {dst[s[0]], dst[s[1]], dst[s[2]]};
    // Skip near-collinear samples before solving.
    const double area_s = (ps[1] - ps[0]).cross(ps[2] - ps[0]).norm();
    const double area_d = (pd[1] - pd[0]).cross(pd[2] - pd[0]).norm();
    if (area_s <= tol_sq * 1e-6 || area_d <= tol_sq * 1e-6) return;
    try {
      const SimilarityTransform T = umeyama_similarity(std::span<const Vec3>(ps, 3), std::span<const Vec3>(pd, 3));
      score[it] = count_inliers(T, src, dst, tol_sq, nullptr);
    } catch (const RegistrationError&) {
    }
  }, 16);

  std::size_t best_it = 0;
  for (std::size_t it = 1; it < iters; ++it) {
    if (score[it] > score[best_it]) best_it = it;
  }
  if (score[best_it] < 3 || score[best_it] < static_cast<std::size_t>(cfg.min_inliers)) {
    throw RegistrationError("ransac_register: best hypothesis has " + std::to_string(score[best_it]) +
                            " inliers (need >= " + std::to_string(std::max(3, cfg.min_inliers)) + ")");
  }

  // Re-derive the winning hypothesis, then re-fit on its inliers until the set stops growing.
  Rng rng(cfg.seed ^ splitmix64(static_cast<std::uint64_t>(best_it) + 1));
  std::size_t s[3];
  s[0] = rng.below(n);
  do s[1] = rng.below(n); while (s[1] == s[0]);
  do s[2] = rng.below(n); while (s[2] == s[0] || s[2] == s[1]);
  const Vec3 ps[3] = {src[s[0]], src[s[1]], src[s[2]]};
  const Vec3 pd[3] = {dst[s[0]], dst[s[1]], dst[s[2]]};
  SimilarityTransform T = umeyama_similarity(std::span<const Vec3>(ps, 3), std::span<const Vec3>(pd, 3));

  // Least-squares re-fit on the inlier set until the set is stable; the returned transform is
  // always a re-fit, never the raw 3-point hypothesis.
  std::vector<bool> mask(n, false);
  std::size_t inliers = count_inliers(T, src, dst, tol_sq, &mask);
  for (int round = 0; round < 20; ++round) {
    std::vector<Vec3> is, id;
    for (std::size_t k = 0; k < n; ++k) {
      if (mask[k]) {
        is.push_back(src[k]);
        id.push_back(dst[k]);
      }
    }
    try {
      T = umeyama_similarity(is, id);
    } catch (const RegistrationError&) {
      break;
    }
    std::vector<bool> new_mask(n, false);
    inliers = count_inliers(T, src, dst, tol_sq, &new_mask);
    const bool same = new_mask == mask;
    mask = std::move(new_mask);
    if (same) break;
  }
  if (inliers < static_cast<std::size_t>(cfg.min_inliers)) {
    throw RegistrationError("ransac_register: " + std::to_string(inliers) + " inliers after re-fit (need >= " +
                            std::to_string(cfg.min_inliers) + ")");
  }

  RansacResult result;
  result.transform = T;
  result.inlier_count = inliers;
  result.inlier_mask.assign(matches.size(), false);
  for (std::size_t k = 0; k < n; ++k) result.inlier_mask[order[k]] = mask[k];
  return result;
}

RansacResult ransac_register(const std::vector<Match>& matches, const GaussianModel& a, const GaussianModel& b,
                             const RegistrationConfig& cfg) {
  const auto ma = a.means();
  const auto mb = b.means();
  return ransac_register_points(matches, ma, mb, cfg);
}

// ---------------------------------------------------------------------------
// Errors

RegistrationErrors registration_errors(const SimilarityTransform& est, const SimilarityTransform& gt) {
  const Mat3 dR = gt.rotation.transpose() * est.rotation;
  const double cos_part = std::clamp((dR.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vec3 axis(dR(2, 1) - dR(1, 2), dR(0, 2) - dR(2, 0), dR(1, 0) - dR(0, 1));
  // atan2 form of arccos((tr - 1) / 2); accurate near zero.
  const double angle = std::atan2(0.5 * axis.norm(), cos_part);
  RegistrationErrors e;
  e.rre_deg = angle * 180.0 / std::numbers::pi;
  e.rte_m = (est.translation - gt.translation).norm();
  e.rse = std::abs(est.scale / gt.scale - 1.0);
  return e;
}

// ---------------------------------------------------------------------------
// Full pipeline

namespace {

FeatureMatrix node_descriptors(const Skeleton& skel, const FeatureMatrix& desc) {
  FeatureMatrix out = FeatureMatrix::Zero(static_cast<Eigen::Index>(skel.nodes.size()), desc.cols());
  std::vector<double> count(skel.nodes.size(), 0.0);
  for (std::size_t i = 0; i < skel.assignment.size(); ++i) {
    out.row(static_cast<Eigen::Index>(skel.assignment[i])) += desc.row(static_cast<Eigen::Index>(i));
    count[skel.assignment[i]] += 1.0;
  }
  for (std::size_t j = 0; j < count.size(); ++j) {
    if (count[j] > 0.0) out.row(static_cast<Eigen::Index>(j)) /= count[j];
  }
  return out;
}

}  // namespace

RegistrationOutcome register_submaps(const GaussianModel& a, const GaussianModel& b, const FeatureField& fa,
                                     const FeatureField& fb, const RegistrationConfig& reg,
                                     const SkeletonConfig& skeleton) {
  RegistrationOutcome out;
  try {
    const auto matches = match_features(fa, fb, reg);
    out.match_count = matches.size();
    const RansacResult r = ransac_register(matches, a, b, reg);
    out.transform = r.transform;
    out.inlier_count = r.inlier_count;
    return out;
  } catch (const RegistrationError& primary_failure) {
    try {
      const Skeleton sa = extract_skeleton(a, skeleton).skeleton;
      const Skeleton sb = extract_skeleton(b, skeleton).skeleton;
      const FeatureMatrix da = node_descriptors(sa, fa.descriptor());
      const FeatureMatrix db = node_descriptors(sb, fb.descriptor());
      const auto matches = match_features(da, db, reg);
      RegistrationConfig node_cfg = reg;
      node_cfg.min_inliers = 3;
      const RansacResult r = ransac_register_points(matches, sa.nodes, sb.nodes, node_cfg);
      out.transform = r.transform;
      out.match_count = matches.size();
      out.inlier_count = r.inlier_count;
      out.used_skeleton_fallback = true;
      return out;
    } catch (const Error& fallback_failure) {
      throw RegistrationError(std::string(primary_failure.what()) +
                              "; skeleton-node fallback failed: " + fallback_failure.what());
    }
  }
}

RegistrationOutcome register_submaps(const GaussianModel& a, const GaussianModel& b, const ConvConfig& conv,
                                     const RegistrationConfig& reg, const SkeletonConfig& skeleton) {
  const FeatureField fa = extract_features(a, conv);
  const FeatureField fb = extract_features(b, conv);
  return register_submaps(a, b, fa, fb, reg, skeleton);
}

}  // namespace gsfuse
