#include "gsfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "gsfuse/error.hpp"
#include "gsfuse/kdtree.hpp"
#include "gsfuse/parallel.hpp"

namespace gsfuse {

void FusionConfig::validate() const {
  const auto bad = [](const std::string& what) { throw ConfigError("fusion config: " + what); };
  if (eps_skel && !(*eps_skel > 0.0)) bad("eps_skel must be > 0");
  if (eps_overlap && !(*eps_overlap > 0.0)) bad("eps_overlap must be > 0");
  if (!(delta > 0.0)) bad("delta must be > 0");
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) bad("alpha, beta, gamma must be >= 0");
  if (!(alpha + beta + gamma > 0.0)) bad("alpha + beta + gamma must be > 0");
  if (!(tau > 0.0)) bad("tau must be > 0");
}

FusionConfig FusionConfig::center_proximity_baseline(const FusionConfig& base) {
  FusionConfig c = base;
  c.alpha = 0.0;
  c.beta = 0.0;
  c.gamma = 1.0;
  c.tau = 2.0;  // every score is <= 1, so the override never fires
  c.gamma_on_skeleton = false;
  return c;
}

Skeleton merge_skeletons(const Skeleton& sa, const Skeleton& sb, double eps_skel) {
  Skeleton out;
  std::vector<bool> consumed(sb.nodes.size(), false);
  for (std::size_t i = 0; i < sa.nodes.size(); ++i) {
    const int cluster = i < sa.cluster_of_node.size() ? sa.cluster_of_node[i] : -1;
    bool merged = false;
    for (std::size_t j = 0; j < sb.nodes.size(); ++j) {
      if (consumed[j]) continue;
      if ((sa.nodes[i] - sb.nodes[j]).norm() < eps_skel) {
        out.nodes.push_back(0.5 * (sa.nodes[i] + sb.nodes[j]));
        out.cluster_of_node.push_back(cluster);
        consumed[j] = true;
        merged = true;
        break;
      }
    }
    if (!merged) {
      out.nodes.push_back(sa.nodes[i]);
      out.cluster_of_node.push_back(cluster);
    }
  }
  // B's cluster ids are offset so they never collide with A's.
  int offset = 0;
  for (int c : sa.cluster_of_node) offset = std::max(offset, c + 1);
  for (std::size_t j = 0; j < sb.nodes.size(); ++j) {
    if (consumed[j]) continue;
    out.nodes.push_back(sb.nodes[j]);
    const int c = j < sb.cluster_of_node.size() ? sb.cluster_of_node[j] : -1;
    out.cluster_of_node.push_back(c >= 0 ? c + offset : -1);
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> overlap_pairs(const GaussianModel& a, const GaussianModel& b,
                                                               double eps_overlap) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  if (a.empty() || b.empty()) return out;
  const auto ma = a.means();
  const auto mb = b.means();
  const KdTree ta(ma), tb(mb);
  std::vector<std::size_t> nn_b(mb.size());
  parallel_for(mb.size(), [&](std::size_t j) { nn_b[j] = ta.nearest(mb[j]).index; });
  std::vector<long long> partner(ma.size(), -1);
  const double eps_sq = eps_overlap * eps_overlap;
  parallel_for(ma.size(), [&](std::size_t i) {
    const Neighbor n = tb.nearest(ma[i]);
    if (n.dist_sq <= eps_sq && nn_b[n.index] == i) partner[i] = static_cast<long long>(n.index);
  });
  for (std::size_t i = 0; i < ma.size(); ++i) {
    if (partner[i] >= 0) out.emplace_back(i, static_cast<std::size_t>(partner[i]));
  }
  return out;
}

Scores score(const Vec3& mean, double detail, Owner owner, const ScoreContext& ctx, const FusionConfig& cfg) {
  Scores s;
  double dmin = 0.0;
  if (ctx.skeleton_tree != nullptr && ctx.skeleton_tree->size() > 0) {
    dmin = std::sqrt(ctx.skeleton_tree->nearest(mean).dist_sq);
    s.s_ske = 1.0 / (1.0 + cfg.delta * dmin);
  }
  if (ctx.detail_max > ctx.detail_min) {
    s.s_deta = std::clamp((detail - ctx.detail_min) / (ctx.detail_max - ctx.detail_min), 0.0, 1.0);
  }
  const Vec3& c = owner == Owner::A ? ctx.center_a : ctx.center_b;
  const double R = owner == Owner::A ? ctx.radius_a : ctx.radius_b;
  s.s_cen = R > 0.0 ? std::clamp(1.0 - (mean - c).norm() / R, 0.0, 1.0) : 1.0;
  const double third = cfg.gamma_on_skeleton ? s.s_ske : s.s_cen;
  s.s_tot = cfg.alpha * s.s_ske + cfg.beta * s.s_deta + cfg.gamma * third;
  return s;
}

bool keep_a(const Scores& a, const Scores& b, const FusionConfig& cfg) {
  return a.s_tot >= b.s_tot || std::max(a.s_ske, a.s_deta) >= cfg.tau;
}

FusionResult fuse(const GaussianModel& a, const GaussianModel& b_registered, const Skeleton& skel_a,
                  const Skeleton& skel_b_registered, const FeatureField& feat_a, const FeatureField& feat_b,
                  const FusionConfig& cfg, double default_eps_skel) {
  cfg.validate();
  if (a.empty() || b_registered.empty()) throw DegenerateInputError("fusion requires two non-empty models");
  if (feat_a.size() != a.size() || feat_b.size() != b_registered.size()) {
    throw ConfigError("fusion: feature fields do not match model sizes");
  }

  FusionReport report;
  report.eps_skel = cfg.eps_skel.value_or(default_eps_skel);
  report.eps_overlap = cfg.eps_overlap.value_or(median_nn_spacing(a));
  if (!(report.eps_skel > 0.0) || !(report.eps_overlap > 0.0)) {
    throw DegenerateInputError("fusion: eps_skel and eps_overlap must resolve to positive values");
  }
  report.merged_skeleton = merge_skeletons(skel_a, skel_b_registered, report.eps_skel);

  const auto pairs = overlap_pairs(a, b_registered, report.eps_overlap);

  ScoreContext ctx;
  const KdTree skel_tree(report.merged_skeleton.nodes);
  ctx.skeleton_tree = &skel_tree;
  ctx.center_a = a.centroid();
  ctx.center_b = b_registered.centroid();
  ctx.radius_a = a.radius();
  ctx.radius_b = b_registered.radius();
  if (!pairs.empty()) {
    ctx.detail_min = std::numeric_limits<double>::infinity();
    ctx.detail_max = -ctx.detail_min;
    for (const auto& [i, j] : pairs) {
      for (double d : {feat_a.detail_score[i], feat_b.detail_score[j]}) {
        ctx.detail_min = std::min(ctx.detail_min, d);
        ctx.detail_max = std::max(ctx.detail_max, d);
      }
    }
  }
  report.detail_min = ctx.detail_min;
  report.detail_max = ctx.detail_max;

  report.pairs.resize(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t k) {
    const auto [i, j] = pairs[k];
    PairRecord& rec = report.pairs[k];
    rec.index_a = i;
    rec.index_b = j;
    rec.score_a = score(a[i].mean, feat_a.detail_score[i], Owner::A, ctx, cfg);
    rec.score_b = score(b_registered[j].mean, feat_b.detail_score[j], Owner::B, ctx, cfg);
    rec.kept_a = keep_a(rec.score_a, rec.score_b, cfg);
  });

  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> pair_of_a(a.size(), kNone);
  std::vector<bool> paired_b(b_registered.size(), false);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    pair_of_a[pairs[k].first] = k;
    paired_b[pairs[k].second] = true;
  }

  std::vector<GaussianPrimitive> out;
  out.reserve(a.size() + b_registered.size() - pairs.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (pair_of_a[i] == kNone) {
      out.push_back(a[i]);
      ++report.kept_from_a;
      continue;
    }
    const PairRecord& rec = report.pairs[pair_of_a[i]];
    if (rec.kept_a) {
      out.push_back(a[i]);
      ++report.kept_from_a;
    } else {
      out.push_back(b_registered[rec.index_b]);
      ++report.kept_from_b;
    }
    ++report.dropped;
  }
  for (std::size_t j = 0; j < b_registered.size(); ++j) {
    if (paired_b[j]) continue;
    out.push_back(b_registered[j]);
    ++report.kept_from_b;
  }
  return {GaussianModel(std::move(out)), std::move(report)};
}

}  // namespace gsfuse
