#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "gsfuse/error.hpp"
#include "gsfuse/fusion.hpp"
#include "gsfuse/kdtree.hpp"
#include "gsfuse/pipeline.hpp"
#include "gsfuse/ply_io.hpp"
#include "oracles.hpp"

using namespace gsfuse;

namespace {

std::string bytes_of(const GaussianModel& m) {
  std::ostringstream out;
  write_ply(m, out);
  return out.str();
}

GaussianModel shifted(const GaussianModel& m, const Vec3& t) {
  return apply_transform(m, SimilarityTransform::from_axis_angle(Vec3::UnitZ(), 0.0, t));
}

struct Inputs {
  Skeleton sa, sb;
  FeatureField fa, fb;
};

Inputs prepare(const GaussianModel& a, const GaussianModel& b) {
  SkeletonConfig sc;
  return {extract_skeleton(a, sc).skeleton, extract_skeleton(b, sc).skeleton, extract_features(a, ConvConfig{}),
          extract_features(b, ConvConfig{})};
}

FusionResult fuse_default(const GaussianModel& a, const GaussianModel& b, const FusionConfig& cfg = {}) {
  const Inputs in = prepare(a, b);
  return fuse(a, b, in.sa, in.sb, in.fa, in.fb, cfg, SkeletonConfig{}.merge_distance());
}

}  // namespace

TEST(MergeSkeletons, MidpointsAndAppendedLeftovers) {
  Skeleton a, b;
  a.nodes = {Vec3(0, 0, 0), Vec3(5, 0, 0)};
  a.cluster_of_node = {0, 1};
  b.nodes = {Vec3(0.1, 0, 0), Vec3(10, 0, 0)};
  b.cluster_of_node = {0, 1};
  const Skeleton m = merge_skeletons(a, b, 0.5);
  ASSERT_EQ(m.size(), 3u);
  EXPECT_LT((m.nodes[0] - Vec3(0.05, 0, 0)).norm(), 1e-15);
  EXPECT_EQ(m.nodes[1], Vec3(5, 0, 0));
  EXPECT_EQ(m.nodes[2], Vec3(10, 0, 0));
  EXPECT_EQ(m.cluster_of_node, (std::vector<int>{0, 1, 3}));
  EXPECT_TRUE(m.assignment.empty());
}

TEST(MergeSkeletons, EachBNodeMergesOnce) {
  Skeleton a, b;
  a.nodes = {Vec3(0, 0, 0), Vec3(0.2, 0, 0)};
  b.nodes = {Vec3(0.1, 0, 0)};
  const Skeleton m = merge_skeletons(a, b, 0.5);
  ASSERT_EQ(m.size(), 2u);
  EXPECT_LT((m.nodes[0] - Vec3(0.05, 0, 0)).norm(), 1e-15);
  EXPECT_EQ(m.nodes[1], Vec3(0.2, 0, 0));
  EXPECT_EQ(merge_skeletons(a, Skeleton{}, 0.5).nodes, a.nodes);
}

TEST(OverlapPairs, IdenticalAndDisplacedModels) {
  const GaussianModel a = oracle::random_model(3, 300, 0, 2.0);
  const auto same = overlap_pairs(a, a, 1e-6);
  ASSERT_EQ(same.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(same[i], std::make_pair(i, i));
  EXPECT_TRUE(overlap_pairs(a, shifted(a, Vec3(100, 0, 0)), 1.0).empty());
}

TEST(OverlapPairs, MatchesMutualNearestNeighbourOracle) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const GaussianModel a = oracle::random_model(seed, 1000, 0, 1.0);
    const GaussianModel b = oracle::random_model(seed + 50, 1000, 0, 1.0);
    for (double eps : {0.02, 0.05, 0.2}) EXPECT_EQ(overlap_pairs(a, b, eps), oracle::mutual_nn(a.means(), b.means(), eps));
  }
}

TEST(Score, Examples) {
  const std::vector<Vec3> nodes = {Vec3(0, 0, 0), Vec3(4, 0, 0)};
  const KdTree tree(nodes);
  ScoreContext ctx;
  ctx.skeleton_tree = &tree;
  ctx.center_a = Vec3(0, 0, 0);
  ctx.center_b = Vec3(4, 0, 0);
  ctx.radius_a = ctx.radius_b = 2.0;
  ctx.detail_min = 1.0;
  ctx.detail_max = 3.0;
  FusionConfig cfg;
  const Scores on_node = score(Vec3(0, 0, 0), 3.0, Owner::A, ctx, cfg);
  EXPECT_EQ(on_node.s_ske, 1.0);
  EXPECT_EQ(on_node.s_deta, 1.0);
  EXPECT_EQ(on_node.s_cen, 1.0);
  EXPECT_NEAR(on_node.s_tot, 1.0, 1e-15);

  const Scores mid = score(Vec3(1, 0, 0), 2.0, Owner::A, ctx, cfg);
  EXPECT_NEAR(mid.s_ske, 0.5, 1e-15);
  EXPECT_NEAR(mid.s_deta, 0.5, 1e-15);
  EXPECT_NEAR(mid.s_cen, 0.5, 1e-15);
  EXPECT_NEAR(score(Vec3(1, 0, 0), 2.0, Owner::B, ctx, cfg).s_cen, 0.0, 1e-15);

  cfg.gamma_on_skeleton = true;
  const Scores compat = score(Vec3(1, 0, 0), 0.0, Owner::B, ctx, cfg);
  EXPECT_EQ(compat.s_deta, 0.0);
  EXPECT_NEAR(compat.s_tot, (cfg.alpha + cfg.gamma) * 0.5, 1e-15);

  ctx.detail_max = ctx.detail_min;
  EXPECT_EQ(score(Vec3(1, 0, 0), 2.0, Owner::A, ctx, cfg).s_deta, 0.0);
}

TEST(Score, RangesAndMonotonicity) {
  const std::vector<Vec3> nodes = {Vec3(0, 0, 0)};
  const KdTree tree(nodes);
  ScoreContext ctx;
  ctx.skeleton_tree = &tree;
  ctx.radius_a = ctx.radius_b = 3.0;
  ctx.detail_min = 0.0;
  ctx.detail_max = 1.0;
  const FusionConfig cfg;
  Rng rng(4);
  for (int t = 0; t < 1000; ++t) {
    const Vec3 p(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    const Scores s = score(p, rng.uniform(-1, 2), t % 2 ? Owner::A : Owner::B, ctx, cfg);
    for (double v : {s.s_ske, s.s_deta, s.s_cen}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    EXPECT_GE(s.s_tot, 0.0);
    EXPECT_LE(s.s_tot, cfg.alpha + cfg.beta + cfg.gamma + 1e-15);
  }
  double prev = 2.0;
  for (double r = 0.0; r < 5.0; r += 0.25) {
    const Scores s = score(Vec3(r, 0, 0), 0.5, Owner::A, ctx, cfg);
    EXPECT_LT(s.s_ske, prev);
    prev = s.s_ske;
  }
  prev = -1.0;
  for (double d = 0.0; d <= 1.0; d += 0.1) {
    const double v = score(Vec3(1, 0, 0), d, Owner::A, ctx, cfg).s_deta;
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(KeepA, TiesThresholdAndBaseline) {
  FusionConfig cfg;
  Scores a, b;
  a.s_tot = b.s_tot = 0.5;
  EXPECT_TRUE(keep_a(a, b, cfg));
  b.s_tot = 0.6;
  EXPECT_FALSE(keep_a(a, b, cfg));
  a.s_deta = 0.95;
  EXPECT_TRUE(keep_a(a, b, cfg));
  const FusionConfig base = FusionConfig::center_proximity_baseline(cfg);
  EXPECT_EQ(base.alpha, 0.0);
  EXPECT_EQ(base.beta, 0.0);
  EXPECT_EQ(base.gamma, 1.0);
  a.s_ske = 1.0;
  EXPECT_FALSE(keep_a(a, b, base));
}

TEST(Fuse, SelfFusionReturnsA) {
  const GaussianModel a = generate(preset_scene("curves", 2)).model;
  const FusionResult r = fuse_default(a, a);
  EXPECT_EQ(r.model.size(), a.size());
  EXPECT_EQ(r.report.pairs.size(), a.size());
  EXPECT_EQ(r.report.kept_from_b, 0u);
  EXPECT_EQ(bytes_of(r.model), bytes_of(a));
}

TEST(Fuse, DisjointInputsConcatenate) {
  const GaussianModel a = generate(preset_scene("curves", 3)).model;
  const GaussianModel b = shifted(generate(preset_scene("curves", 4)).model, Vec3(1000, 0, 0));
  const FusionResult r = fuse_default(a, b);
  ASSERT_EQ(r.model.size(), a.size() + b.size());
  EXPECT_TRUE(r.report.pairs.empty());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(r.model[i].mean, a[i].mean);
  for (std::size_t j = 0; j < b.size(); ++j) EXPECT_EQ(r.model[a.size() + j].mean, b[j].mean);
}

TEST(Fuse, SizeIdentityAndOrdering) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const GeneratedScene scene = generate(preset_scene("registration", seed));
    SplitOptions opts;
    opts.noise_sigma = 0.01;
    opts.seed = seed;
    const SubmapPair pair = split_pair(scene, opts);
    for (bool baseline : {false, true}) {
      const FusionRun run = run_fusion(pair.a, pair.b, opts.transform, PipelineConfig{}, baseline);
      const FusionReport& rep = run.fusion.report;
      EXPECT_EQ(run.fusion.model.size(), pair.a.size() + pair.b.size() - rep.pairs.size());
      EXPECT_EQ(rep.kept_from_a + rep.kept_from_b, run.fusion.model.size());
      EXPECT_EQ(rep.dropped, rep.pairs.size());
      EXPECT_GT(rep.pairs.size(), 0u);
      for (const auto& p : rep.pairs) {
        const Vec3& want = p.kept_a ? pair.a[p.index_a].mean : run.b_registered[p.index_b].mean;
        EXPECT_EQ(run.fusion.model[p.index_a].mean, want);
      }
    }
  }
}

TEST(Fuse, RepeatedRunsAreByteIdentical) {
  const SubmapPair pair = split_pair(generate(preset_scene("registration", 9)), SplitOptions{});
  const FusionRun r1 = run_fusion(pair.a, pair.b, SimilarityTransform{}, PipelineConfig{}, false);
  const FusionRun r2 = run_fusion(pair.a, pair.b, SimilarityTransform{}, PipelineConfig{}, false);
  EXPECT_EQ(bytes_of(r1.fusion.model), bytes_of(r2.fusion.model));
}

TEST(Fuse, DetailOnlyScoringPrefersPlantedRidge) {
  std::size_t band = 0, from_b = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SplitOptions opts;
    opts.seed = seed;
    opts.noise_sigma = 0.01;
    opts.split_axis = Vec3::UnitX();
    const SubmapPair pair = planted_detail_pair(preset_scene("planted-ridge", seed), opts);
    PipelineConfig cfg;
    cfg.fusion.alpha = 0.0;
    cfg.fusion.beta = 1.0;
    cfg.fusion.gamma = 0.0;
    const FusionRun run = run_fusion(pair.a, pair.b, opts.transform, cfg, false);
    for (const auto& p : run.fusion.report.pairs) {
      if (!pair.gt.detail_b[p.index_b]) continue;
      ++band;
      from_b += !p.kept_a;
    }
  }
  ASSERT_GT(band, 0u);
  EXPECT_GE(static_cast<double>(from_b), 0.8 * static_cast<double>(band)) << from_b << " of " << band;
}

TEST(Fuse, RejectsEmptyAndMismatchedInputs) {
  const GaussianModel a = oracle::random_model(1, 50);
  const Inputs in = prepare(a, a);
  EXPECT_THROW(fuse(a, GaussianModel(), in.sa, in.sb, in.fa, in.fb, FusionConfig{}, 0.25), DegenerateInputError);
  const GaussianModel c = oracle::random_model(2, 40);
  EXPECT_THROW(fuse(a, c, in.sa, in.sb, in.fa, in.fb, FusionConfig{}, 0.25), ConfigError);
  FusionConfig bad;
  bad.tau = -1.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}
