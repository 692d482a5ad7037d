#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "gsfuse/error.hpp"
#include "gsfuse/gafeat.hpp"
#include "oracles.hpp"

using namespace gsfuse;

namespace {

GaussianPrimitive with_cov(const Vec3& mean, const Vec3& sigmas, const Eigen::Quaterniond& q = Eigen::Quaterniond::Identity()) {
  GaussianPrimitive p;
  p.mean = mean;
  p.log_scale = sigmas.array().log();
  p.rotation = q;
  return p;
}

GaussianModel isotropic_model(std::uint64_t seed, std::size_t n, double sigma) {
  Rng rng(seed);
  std::vector<GaussianPrimitive> v;
  for (std::size_t i = 0; i < n; ++i) {
    GaussianPrimitive p = with_cov(Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)),
                                   Vec3::Constant(sigma));
    p.rotation = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
    p.opacity_logit = rng.uniform(-2, 2);
    v.push_back(p);
  }
  return GaussianModel(v);
}

/// Quadruple loop over (centre, neighbour, kernel point, output dim) with oracle quadratic forms.
FeatureMatrix naive_conv(const GaussianModel& m, const FeatureMatrix& f, const KernelLayout& layout,
                         const ConvWeights& w, const ConvConfig& cfg) {
  FeatureMatrix out = FeatureMatrix::Zero(static_cast<Eigen::Index>(m.size()), w.out_dim);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const Mat3 P = oracle::cofactor_inverse(oracle::covariance(m[i]));
    const Mat3 R = oracle::quat_to_matrix(m[i].rotation.w(), m[i].rotation.x(), m[i].rotation.y(), m[i].rotation.z());
    for (std::size_t j : oracle::mahalanobis_knn(m, i, cfg.num_neighbors, cfg.mahalanobis_radius)) {
      for (std::size_t k = 0; k < layout.points.size(); ++k) {
        const Vec3 x = cfg.kernel_frame == KernelFrame::Primitive ? Vec3(R * layout.points[k]) : layout.points[k];
        const Vec3 d = (m[j].mean - m[i].mean) - x;
        const double wk = std::exp(-0.5 * d.dot(P * d));
        for (int o = 0; o < w.out_dim; ++o) {
          double s = 0.0;
          for (int c = 0; c < w.in_dim; ++c) s += w.per_kernel[k](o, c) * f(static_cast<Eigen::Index>(j), c);
          out(static_cast<Eigen::Index>(i), o) += wk * s;
        }
      }
    }
  }
  return out;
}

FeatureMatrix random_features(std::uint64_t seed, std::size_t rows, int cols) {
  Rng rng(seed);
  FeatureMatrix f(static_cast<Eigen::Index>(rows), cols);
  for (Eigen::Index r = 0; r < f.rows(); ++r)
    for (Eigen::Index c = 0; c < cols; ++c) f(r, c) = rng.normal();
  return f;
}

}  // namespace

TEST(Mahalanobis, Examples) {
  const GaussianPrimitive c = with_cov(Vec3(1, 2, 3), Vec3(2, 1, 1));
  EXPECT_EQ(mahalanobis_dist(c, c.mean), 0.0);
  EXPECT_NEAR(mahalanobis_dist(c, c.mean + Vec3(2, 0, 0)), 1.0, 1e-15);
}

TEST(Mahalanobis, MatchesCofactorOracle) {
  Rng rng(17);
  for (int t = 0; t < 500; ++t) {
    const GaussianPrimitive c = oracle::random_primitive(rng);
    const Vec3 x(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    const double want = std::sqrt(oracle::mahalanobis_sq(c, x));
    EXPECT_NEAR(mahalanobis_dist(c, x), want, 1e-10 * std::max(1.0, want));
  }
}

TEST(Mahalanobis, HomogeneousAlongRays) {
  Rng rng(2);
  const GaussianPrimitive c = oracle::random_primitive(rng);
  const Vec3 d(0.3, -0.1, 0.2);
  const double base = mahalanobis_dist(c, c.mean + d);
  for (double s : {0.5, 2.0, 7.0}) EXPECT_NEAR(mahalanobis_dist(c, c.mean + s * d), s * base, 1e-9 * s * base);
}

TEST(Neighborhood, IsotropicEqualsEuclideanKnn) {
  const GaussianModel m = isotropic_model(5, 400, 0.2);
  const GaussianIndex index(m);
  ConvConfig cfg;
  cfg.mahalanobis_radius = 1e6;
  for (std::size_t i = 0; i < m.size(); i += 7) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < m.size(); ++j)
      if (j != i) d.emplace_back((m[j].mean - m[i].mean).squaredNorm(), j);
    std::sort(d.begin(), d.end());
    const auto got = neighborhood(index, i, cfg);
    ASSERT_EQ(got.size(), 16u);
    for (std::size_t t = 0; t < got.size(); ++t) EXPECT_EQ(got[t], d[t].second);
  }
}

TEST(Neighborhood, ElongationFavoursTheLongAxis) {
  const double a = 0.5, delta = 0.05;
  const GaussianModel m({with_cov(Vec3::Zero(), Vec3(1.0, 0.1, 0.1)), with_cov(Vec3(a, 0, 0), Vec3::Constant(0.1)),
                         with_cov(Vec3(0, a - delta, 0), Vec3::Constant(0.1))});
  ConvConfig cfg;
  cfg.num_neighbors = 1;
  cfg.mahalanobis_radius = 100.0;
  const auto n = neighborhood(GaussianIndex(m), 0, cfg);
  ASSERT_EQ(n.size(), 1u);
  EXPECT_EQ(n[0], 1u);
}

TEST(Neighborhood, MatchesExhaustiveScan) {
  const GaussianModel m = oracle::random_model(31, 2000, 0, 2.0);
  const GaussianIndex index(m);
  ConvConfig cfg;
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const std::size_t i = rng.below(m.size());
    EXPECT_EQ(neighborhood(index, i, cfg), oracle::mahalanobis_knn(m, i, cfg.num_neighbors, cfg.mahalanobis_radius));
  }
}

TEST(Neighborhood, EmptyGivesZeroOutput) {
  const GaussianModel m({with_cov(Vec3::Zero(), Vec3::Constant(0.01)), with_cov(Vec3(5, 0, 0), Vec3::Constant(0.01))});
  const GaussianIndex index(m);
  ConvConfig cfg;
  EXPECT_TRUE(neighborhood(index, 0, cfg).empty());
  const KernelLayout layout = KernelLayout::fibonacci(0.1, 15);
  const auto w = make_conv_weights(3, 4, 15, 1);
  const FeatureMatrix out = conv_layer(index, FeatureMatrix::Ones(2, 3), layout, w, cfg);
  EXPECT_EQ(out.cwiseAbs().maxCoeff(), 0.0);
}

TEST(KernelWeight, Examples) {
  const GaussianPrimitive c = with_cov(Vec3(1, 1, 1), Vec3::Ones());
  EXPECT_EQ(kernel_weight(c, Vec3(1.5, 1, 1), Vec3(0.5, 0, 0)), 1.0);
  EXPECT_NEAR(kernel_weight(c, Vec3(1, 2, 1), Vec3::Zero()), std::exp(-0.5), 1e-15);
}

TEST(KernelWeight, MatchesDirectEvaluationAndRange) {
  Rng rng(8);
  for (int t = 0; t < 500; ++t) {
    const GaussianPrimitive c = oracle::random_primitive(rng);
    const Vec3 nb = c.mean + Vec3(rng.normal(0, 0.1), rng.normal(0, 0.1), rng.normal(0, 0.1));
    const Vec3 x(rng.normal(0, 0.05), rng.normal(0, 0.05), rng.normal(0, 0.05));
    const Vec3 d = (nb - c.mean) - x;
    const double want = std::exp(-0.5 * d.dot(oracle::cofactor_inverse(oracle::covariance(c)) * d));
    const double got = kernel_weight(c, nb, x);
    EXPECT_NEAR(got, want, 1e-12);
    EXPECT_GT(got, 0.0);
    EXPECT_LE(got, 1.0);
  }
}

TEST(KernelLayout, FibonacciIsValid) {
  const KernelLayout k = KernelLayout::fibonacci(0.3, 15);
  EXPECT_EQ(k.points.size(), 15u);
  EXPECT_NO_THROW(k.validate());
  EXPECT_EQ(k.points[0], Vec3::Zero());
  for (std::size_t m = 1; m < k.points.size(); ++m) EXPECT_NEAR(k.points[m].norm(), 0.225, 1e-12);
  KernelLayout bad = k;
  bad.points.push_back(Vec3(1, 0, 0));
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(ConvLayer, MatchesNaiveLoop) {
  for (KernelFrame frame : {KernelFrame::World, KernelFrame::Primitive}) {
    const GaussianModel m = oracle::random_model(41, 200, 0, 0.6);
    const GaussianIndex index(m);
    ConvConfig cfg;
    cfg.kernel_frame = frame;
    const KernelLayout layout = KernelLayout::fibonacci(0.15, 15);
    const auto w = make_conv_weights(5, 7, 15, 9);
    const FeatureMatrix f = random_features(3, m.size(), 5);
    const FeatureMatrix got = conv_layer(index, f, layout, w, cfg);
    const FeatureMatrix want = naive_conv(m, f, layout, w, cfg);
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(ConvLayer, SingleCoincidentNeighbourIsDominatedByItsKernelPoint) {
  const KernelLayout layout = KernelLayout::fibonacci(30.0, 15);
  const Vec3 x = layout.points[3];
  const GaussianModel m({with_cov(Vec3::Zero(), Vec3::Ones()), with_cov(x, Vec3::Ones())});
  ConvConfig cfg;
  cfg.kernel_frame = KernelFrame::World;
  cfg.mahalanobis_radius = 1e3;
  const auto w = make_conv_weights(2, 3, 15, 5);
  FeatureMatrix f(2, 2);
  f << 1.0, 2.0, -1.0, 0.5;
  const FeatureMatrix out = conv_layer(GaussianIndex(m), f, layout, w, cfg);
  const Eigen::VectorXd want = w.per_kernel[3] * f.row(1).transpose();
  EXPECT_LT((out.row(0).transpose() - want).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ConvLayer, IsLinearInFeatures) {
  const GaussianModel m = oracle::random_model(12, 300, 0, 0.7);
  const GaussianIndex index(m);
  ConvConfig cfg;
  const KernelLayout layout = KernelLayout::fibonacci(default_kernel_radius(m), 15);
  const auto w = make_conv_weights(4, 6, 15, 2);
  const FeatureMatrix f = random_features(1, m.size(), 4), g = random_features(2, m.size(), 4);
  const double alpha = -1.7;
  const FeatureMatrix lhs = conv_layer(index, alpha * f + g, layout, w, cfg);
  const FeatureMatrix rhs = alpha * conv_layer(index, f, layout, w, cfg) + conv_layer(index, g, layout, w, cfg);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ConvLayer, DimensionMismatchIsConfigError) {
  const GaussianModel m = oracle::random_model(1, 10);
  const auto w = make_conv_weights(4, 2, 15, 2);
  EXPECT_THROW(conv_layer(GaussianIndex(m), FeatureMatrix::Ones(10, 3), KernelLayout::fibonacci(0.1), w, ConvConfig{}),
               ConfigError);
}

TEST(Features, CoRotationInvariance) {
  const GaussianModel m = oracle::random_model(77, 400, 0, 0.8);
  const SimilarityTransform T = SimilarityTransform::from_axis_angle(Vec3(0.2, -0.5, 1).normalized(), 1.1);
  const GaussianModel rotated = apply_transform(m, T);
  for (KernelFrame frame : {KernelFrame::World, KernelFrame::Primitive}) {
    ConvConfig cfg;
    cfg.kernel_frame = frame;
    const KernelLayout layout = KernelLayout::fibonacci(default_kernel_radius(m), 15);
    // World-frame kernels must be rotated with the scene; primitive-frame kernels follow each Gaussian.
    const KernelLayout rlayout = frame == KernelFrame::World ? layout.rotated(T.rotation) : layout;
    const FeatureField a = extract_features(m, cfg, layout);
    const FeatureField b = extract_features(rotated, cfg, rlayout);
    const GaussianIndex ia(m), ib(rotated);
    for (std::size_t i = 0; i < m.size(); i += 5) EXPECT_EQ(neighborhood(ia, i, cfg), neighborhood(ib, i, cfg));
    for (std::size_t l = 0; l < a.layer_outputs.size(); ++l) {
      const double scale = std::max(1.0, a.layer_outputs[l].cwiseAbs().maxCoeff());
      EXPECT_LT((a.layer_outputs[l] - b.layer_outputs[l]).cwiseAbs().maxCoeff(), 1e-9 * scale);
    }
    const Vec3 nb = m[1].mean, x = layout.points[4];
    EXPECT_NEAR(kernel_weight(m[0], nb, x), kernel_weight(rotated[0], rotated[1].mean, T.rotation * x), 1e-12);
  }
}

TEST(Features, IsotropicWeightReducesToEuclideanGaussian) {
  const double sigma = 0.3;
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    GaussianPrimitive c = with_cov(Vec3(rng.normal(), rng.normal(), rng.normal()), Vec3::Constant(sigma));
    c.rotation = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
    const Vec3 nb = c.mean + Vec3(rng.normal(0, 0.3), rng.normal(0, 0.3), rng.normal(0, 0.3));
    const Vec3 x(rng.normal(0, 0.1), rng.normal(0, 0.1), rng.normal(0, 0.1));
    const Vec3 d = nb - c.mean - x;
    EXPECT_NEAR(kernel_weight(c, nb, x), std::exp(-d.squaredNorm() / (2 * sigma * sigma)), 1e-12);
    EXPECT_NEAR(mahalanobis_dist(c, nb), (nb - c.mean).norm() / sigma, 1e-12);
  }
}

TEST(Features, GridInteriorHasUniformDetail) {
  std::vector<GaussianPrimitive> v;
  const int n = 12;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z) v.push_back(with_cov(Vec3(0.1 * x, 0.1 * y, 0.1 * z), Vec3::Constant(0.05)));
  const GaussianModel m(v);
  ConvConfig cfg;
  cfg.num_neighbors = 6;
  cfg.mahalanobis_radius = 2.5;  // the six face neighbours at 2 sigma, nothing else
  const FeatureField f = extract_features(m, cfg);
  const auto at = [&](int x, int y, int z) { return f.detail_score[static_cast<std::size_t>((x * n + y) * n + z)]; };
  const double ref = at(5, 5, 5);
  for (int x = 2; x < n - 2; ++x)
    for (int y = 2; y < n - 2; ++y)
      for (int z = 2; z < n - 2; ++z) EXPECT_NEAR(at(x, y, z), ref, 1e-6);
}

TEST(Features, DeterministicAndShaped) {
  const GaussianModel m = oracle::random_model(9, 300);
  ConvConfig cfg;
  cfg.layer_dims = {8, 5, 3};
  const FeatureField a = extract_features(m, cfg), b = extract_features(m, cfg);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(a.layer_dims(), (std::vector<int>{8, 5, 3}));
  for (std::size_t i = 0; i < m.size(); ++i) {
    EXPECT_GE(a.detail_score[i], 0.0);
    EXPECT_DOUBLE_EQ(a.detail_score[i], a.layer_outputs[1].row(static_cast<Eigen::Index>(i)).norm());
  }
  cfg.concat_detail_layers = true;
  const FeatureField c = extract_features(m, cfg);
  EXPECT_EQ(c.descriptor().cols(), 13);
}

TEST(Features, BinaryDumpLayout) {
  const GaussianModel m = oracle::random_model(9, 20);
  const FeatureField f = extract_features(m, ConvConfig{});
  const auto path = std::filesystem::temp_directory_path() / "gsfuse_feat_dump.bin";
  dump_feature_binary(f, path);
  std::ifstream in(path, std::ios::binary);
  char magic[8];
  in.read(magic, 8);
  EXPECT_EQ(std::string(magic, 8), "GSFEAT01");
  std::uint32_t layers = 0, rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&layers), 4);
  in.read(reinterpret_cast<char*>(&rows), 4);
  in.read(reinterpret_cast<char*>(&cols), 4);
  EXPECT_EQ(layers, 2u);
  EXPECT_EQ(rows, 20u);
  EXPECT_EQ(cols, 16u);
  float first = 0.0f;
  in.read(reinterpret_cast<char*>(&first), 4);
  EXPECT_EQ(first, static_cast<float>(f.layer_outputs[0](0, 0)));
  EXPECT_EQ(std::filesystem::file_size(path), 8u + 4u + 2u * (8u + 20u * 16u * 4u));
  std::filesystem::remove(path);
}

TEST(ConvConfig, RequiresTwoLayers) {
  ConvConfig c;
  c.layer_dims = {16};
  EXPECT_THROW(c.validate(), ConfigError);
}
