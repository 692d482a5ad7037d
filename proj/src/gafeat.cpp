#include "gsfuse/gafeat.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include "gsfuse/error.hpp"
#include "gsfuse/parallel.hpp"
#include "gsfuse/random.hpp"

namespace gsfuse {

KernelLayout KernelLayout::fibonacci(double sigma, int count) {
  if (!(sigma > 0.0)) throw ConfigError("kernel radius must be > 0");
  if (count < 1) throw ConfigError("kernel_count must be >= 1");
  KernelLayout layout;
  layout.radius = sigma;
  layout.points.push_back(Vec3::Zero());
  const int n = count - 1;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int k = 0; k < n; ++k) {
    const double y = 1.0 - 2.0 * (k + 0.5) / n;
    const double r = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double th = golden * k;
    layout.points.push_back(0.75 * sigma * Vec3(r * std::cos(th), y, r * std::sin(th)));
  }
  return layout;
}

KernelLayout KernelLayout::rotated(const Mat3& R) const {
  KernelLayout out = *this;
  for (auto& p : out.points) p = R * p;
  return out;
}

void KernelLayout::validate() const {
  if (points.empty()) throw ConfigError("kernel layout is empty");
  if (!(radius > 0.0)) throw ConfigError("kernel radius must be > 0");
  bool origin = false;
  for (std::size_t a = 0; a < points.size(); ++a) {
    if (points[a].norm() > radius * (1.0 + 1e-12)) throw ConfigError("kernel point outside the kernel sphere");
    origin = origin || points[a].norm() <= 1e-12 * radius;
    for (std::size_t b = a + 1; b < points.size(); ++b) {
      if ((points[a] - points[b]).norm() <= 1e-12 * radius) throw ConfigError("duplicate kernel points");
    }
  }
  if (!origin) throw ConfigError("kernel layout must contain the origin");
}

void ConvConfig::validate() const {
  if (num_neighbors < 1) throw ConfigError("conv config: num_neighbors must be >= 1");
  if (!(mahalanobis_radius > 0.0)) throw ConfigError("conv config: mahalanobis_radius must be > 0");
  if (kernel_count < 1) throw ConfigError("conv config: kernel_count must be >= 1");
  if (kernel_radius && !(*kernel_radius > 0.0)) throw ConfigError("conv config: kernel_radius must be > 0");
  if (layer_dims.size() < 2) throw ConfigError("conv config: at least two layers are required");
  for (int d : layer_dims) {
    if (d < 1) throw ConfigError("conv config: layer dimensions must be >= 1");
  }
}

ConvWeights make_conv_weights(int in_dim, int out_dim, int kernel_count, std::uint64_t seed) {
  ConvWeights w;
  w.in_dim = in_dim;
  w.out_dim = out_dim;
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in_dim) * kernel_count);
  for (int m = 0; m < kernel_count; ++m) {
    Eigen::MatrixXd W(out_dim, in_dim);
    for (int r = 0; r < out_dim; ++r) {
      for (int c = 0; c < in_dim; ++c) W(r, c) = rng.uniform(-1.0, 1.0) * scale;
    }
    w.per_kernel.push_back(std::move(W));
  }
  return w;
}

std::vector<int> FeatureField::layer_dims() const {
  std::vector<int> dims;
  for (const auto& l : layer_outputs) dims.push_back(static_cast<int>(l.cols()));
  return dims;
}

FeatureMatrix FeatureField::descriptor() const {
  if (layer_outputs.size() < 2) throw ConfigError("feature field has fewer than two layers");
  if (!concat_detail_layers) return layer_outputs[1];
  FeatureMatrix out(layer_outputs[1].rows(), layer_outputs[0].cols() + layer_outputs[1].cols());
  out << layer_outputs[0], layer_outputs[1];
  return out;
}

bool FeatureField::operator==(const FeatureField& o) const {
  if (layer_outputs.size() != o.layer_outputs.size()) return false;
  for (std::size_t l = 0; l < layer_outputs.size(); ++l) {
    if (layer_outputs[l].rows() != o.layer_outputs[l].rows() || layer_outputs[l].cols() != o.layer_outputs[l].cols())
      return false;
    if (layer_outputs[l] != o.layer_outputs[l]) return false;
  }
  return detail_score == o.detail_score && kernel_radius == o.kernel_radius &&
         concat_detail_layers == o.concat_detail_layers;
}

GaussianIndex::GaussianIndex(const GaussianModel& model) : model_(&model) {
  const auto means = model.means();
  tree_ = KdTree(means);
  geometry_.reserve(model.size());
  for (const auto& p : model.primitives()) geometry_.push_back(gsfuse::geometry(p));
}

double mahalanobis_dist(const GaussianPrimitive& center, const Vec3& other_mean) {
  const GaussianGeometry g = geometry(center);
  return std::sqrt(std::max(0.0, g.mahalanobis_sq(other_mean - center.mean)));
}

std::vector<std::size_t> neighborhood(const GaussianIndex& index, std::size_t i, const ConvConfig& cfg) {
  const GaussianGeometry& g = index.geometry(i);
  const Vec3& mu = index.model()[i].mean;
  const double r_m = cfg.mahalanobis_radius;
  // The Mahalanobis ball of radius r_m is contained in a Euclidean ball of radius r_m * sqrt(lambda_max).
  std::vector<Neighbor> cand;
  index.tree().radius_neighbors(mu, r_m * std::sqrt(g.lambda_max) * (1.0 + 1e-12), cand);
  std::vector<Neighbor> scored;
  scored.reserve(cand.size());
  for (const auto& c : cand) {
    if (c.index == i) continue;
    const double m = g.mahalanobis_sq(index.model()[c.index].mean - mu);
    if (m <= r_m * r_m) scored.push_back({c.index, m});
  }
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.num_neighbors), scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t t = 0; t < k; ++t) out.push_back(scored[t].index);
  return out;
}

double kernel_weight(const GaussianPrimitive& center, const Vec3& neighbor_mean, const Vec3& kernel_point) {
  const GaussianGeometry g = geometry(center);
  const Vec3 d = (neighbor_mean - center.mean) - kernel_point;
  return std::exp(-0.5 * g.mahalanobis_sq(d));
}

FeatureMatrix conv_layer(const GaussianIndex& index, const FeatureMatrix& features_in, const KernelLayout& layout,
                         const ConvWeights& weights, const ConvConfig& cfg,
                         const std::vector<std::vector<std::size_t>>& neighborhoods) {
  const std::size_t n = index.size();
  const std::size_t M = layout.points.size();
  if (static_cast<std::size_t>(features_in.rows()) != n) {
    throw ConfigError("conv_layer: feature rows (" + std::to_string(features_in.rows()) +
                      ") do not match primitive count (" + std::to_string(n) + ")");
  }
  if (features_in.cols() != weights.in_dim) {
    throw ConfigError("conv_layer: input dimension " + std::to_string(features_in.cols()) +
                      " does not match weight input dimension " + std::to_string(weights.in_dim));
  }
  if (weights.per_kernel.size() != M) {
    throw ConfigError("conv_layer: " + std::to_string(weights.per_kernel.size()) + " weight matrices for " +
                      std::to_string(M) + " kernel points");
  }
  if (neighborhoods.size() != n) throw ConfigError("conv_layer: neighbourhood count does not match model");

  FeatureMatrix out = FeatureMatrix::Zero(static_cast<Eigen::Index>(n), weights.out_dim);
  parallel_for(n, [&](std::size_t i) {
    const GaussianGeometry& g = index.geometry(i);
    const Vec3& mu = index.model()[i].mean;
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(features_in.cols(), static_cast<Eigen::Index>(M));
    for (std::size_t j : neighborhoods[i]) {
      const Vec3 delta = index.model()[j].mean - mu;
      for (std::size_t m = 0; m < M; ++m) {
        const Vec3 x = cfg.kernel_frame == KernelFrame::Primitive ? Vec3(g.frame * layout.points[m]) : layout.points[m];
        const Vec3 d = delta - x;
        const double w = std::exp(-0.5 * g.mahalanobis_sq(d));
        acc.col(static_cast<Eigen::Index>(m)) += w * features_in.row(static_cast<Eigen::Index>(j)).transpose();
      }
    }
    Eigen::VectorXd o = Eigen::VectorXd::Zero(weights.out_dim);
    for (std::size_t m = 0; m < M; ++m) o += weights.per_kernel[m] * acc.col(static_cast<Eigen::Index>(m));
    out.row(static_cast<Eigen::Index>(i)) = o.transpose();
  }, 64);
  return out;
}

namespace {

std::vector<std::vector<std::size_t>> all_neighborhoods(const GaussianIndex& index, const ConvConfig& cfg) {
  std::vector<std::vector<std::size_t>> hoods(index.size());
  parallel_for(index.size(), [&](std::size_t i) { hoods[i] = neighborhood(index, i, cfg); });
  return hoods;
}

}  // namespace

FeatureMatrix conv_layer(const GaussianIndex& index, const FeatureMatrix& features_in, const KernelLayout& layout,
                         const ConvWeights& weights, const ConvConfig& cfg) {
  return conv_layer(index, features_in, layout, weights, cfg, all_neighborhoods(index, cfg));
}

FeatureMatrix input_features(const GaussianIndex& index, double kernel_radius) {
  const double s2 = kernel_radius * kernel_radius;
  FeatureMatrix f(static_cast<Eigen::Index>(index.size()), 4);
  for (std::size_t i = 0; i < index.size(); ++i) {
    const GaussianGeometry& g = index.geometry(i);
    const auto r = static_cast<Eigen::Index>(i);
    f(r, 0) = 1.0;
    f(r, 1) = opacity(index.model()[i]);
    f(r, 2) = g.lambda_max / g.lambda_min;
    f(r, 3) = g.covariance.trace() / s2;
  }
  return f;
}

double default_kernel_radius(const GaussianModel& model) {
  const double s = median_nn_spacing(model);
  return s > 0.0 ? 2.0 * s : 1.0;
}

FeatureField extract_features(const GaussianModel& model, const ConvConfig& cfg, const KernelLayout& layout) {
  cfg.validate();
  layout.validate();
  if (model.empty()) throw DegenerateInputError("cannot extract features of an empty model");

  const GaussianIndex index(model);
  const auto hoods = all_neighborhoods(index, cfg);

  FeatureField field;
  field.kernel_radius = layout.radius;
  field.concat_detail_layers = cfg.concat_detail_layers;

  FeatureMatrix x = input_features(index, layout.radius);
  for (std::size_t l = 0; l < cfg.layer_dims.size(); ++l) {
    const ConvWeights w = make_conv_weights(static_cast<int>(x.cols()), cfg.layer_dims[l],
                                            static_cast<int>(layout.points.size()),
                                            splitmix64(cfg.weight_seed + 0x1000 * (l + 1)));
    FeatureMatrix y = conv_layer(index, x, layout, w, cfg, hoods);
    field.layer_outputs.push_back(y);
    x = y.cwiseMax(0.0);
  }
  const FeatureMatrix desc = field.descriptor();
  field.detail_score.resize(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) field.detail_score[i] = desc.row(static_cast<Eigen::Index>(i)).norm();
  return field;
}

FeatureField extract_features(const GaussianModel& model, const ConvConfig& cfg) {
  cfg.validate();
  const double sigma = cfg.kernel_radius.value_or(default_kernel_radius(model));
  return extract_features(model, cfg, KernelLayout::fibonacci(sigma, cfg.kernel_count));
}

void dump_feature_binary(const FeatureField& field, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  const auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  out.write("GSFEAT01", 8);
  put_u32(static_cast<std::uint32_t>(field.layer_outputs.size()));
  for (const auto& l : field.layer_outputs) {
    put_u32(static_cast<std::uint32_t>(l.rows()));
    put_u32(static_cast<std::uint32_t>(l.cols()));
    for (Eigen::Index r = 0; r < l.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.cols(); ++c) {
        const float v = static_cast<float>(l(r, c));
        out.write(reinterpret_cast<const char*>(&v), 4);
      }
    }
  }
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace gsfuse
