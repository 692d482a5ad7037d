#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "gsfuse/gs_model.hpp"
#include "gsfuse/kdtree.hpp"

namespace gsfuse {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Fixed kernel points inside a sphere of radius `radius`.
struct KernelLayout {
  std::vector<Vec3> points;
  double radius = 1.0;

  /// One point at the origin plus (count - 1) Fibonacci-sphere points at 0.75 * sigma.
  static KernelLayout fibonacci(double sigma, int count = 15);
  KernelLayout rotated(const Mat3& R) const;
  /// Throws ConfigError unless all points lie in the sphere, one sits at the origin and all are distinct.
  void validate() const;
};

/// Orientation of the kernel points around each convolution centre.
enum class KernelFrame {
  World,      // kernel points used as given
  Primitive,  // kernel points rotated into the centre primitive's own frame
};

struct ConvConfig {
  int num_neighbors = 16;
  double mahalanobis_radius = 3.0;
  int kernel_count = 15;
  std::optional<double> kernel_radius;  // m; defaults to 2x median nearest-neighbour spacing
  std::vector<int> layer_dims{16, 16};
  std::uint64_t weight_seed = 42;
  KernelFrame kernel_frame = KernelFrame::Primitive;
  bool concat_detail_layers = false;  // detail/matching descriptor = [layer1, layer2] instead of layer2

  void validate() const;
};

/// Per-kernel-point mixing matrices of one layer (out_dim x in_dim each).
struct ConvWeights {
  std::vector<Eigen::MatrixXd> per_kernel;
  int in_dim = 0;
  int out_dim = 0;
};

/// Seeded uniform(-1, 1) / sqrt(in_dim * kernel_count) entries.
ConvWeights make_conv_weights(int in_dim, int out_dim, int kernel_count, std::uint64_t seed);

struct FeatureField {
  std::vector<FeatureMatrix> layer_outputs;  // raw (pre-activation) output of every layer
  std::vector<double> detail_score;          // |layer-2 output| (or of the concatenation)
  double kernel_radius = 0.0;
  bool concat_detail_layers = false;

  std::size_t size() const { return detail_score.size(); }
  std::vector<int> layer_dims() const;
  /// Row i is the descriptor used for detail scoring and matching.
  FeatureMatrix descriptor() const;

  bool operator==(const FeatureField& o) const;
};

/// Spatial index plus cached covariance geometry of a model. Holds a reference to the model,
/// which must outlive the index.
class GaussianIndex {
 public:
  explicit GaussianIndex(const GaussianModel& model);

  const GaussianModel& model() const { return *model_; }
  const KdTree& tree() const { return tree_; }
  const GaussianGeometry& geometry(std::size_t i) const { return geometry_[i]; }
  std::size_t size() const { return geometry_.size(); }

 private:
  const GaussianModel* model_;
  KdTree tree_;
  std::vector<GaussianGeometry> geometry_;
};

/// sqrt((mu_j - mu_i)^T Sigma_i^-1 (mu_j - mu_i)).
double mahalanobis_dist(const GaussianPrimitive& center, const Vec3& other_mean);

/// The k nearest primitives to i under the centre's Mahalanobis metric, excluding i, restricted to
/// distance <= mahalanobis_radius. Ties go to the lower index.
std::vector<std::size_t> neighborhood(const GaussianIndex& index, std::size_t i, const ConvConfig& cfg);

/// exp(-1/2 d^T Sigma_i^-1 d) with d = (neighbor_mean - mu_i) - kernel_point (world-frame offset).
double kernel_weight(const GaussianPrimitive& center, const Vec3& neighbor_mean, const Vec3& kernel_point);

/// F'(i) = sum_{j in N(i)} sum_m w_m(mu_j, Sigma_i, x_m) W_m f_j.
FeatureMatrix conv_layer(const GaussianIndex& index, const FeatureMatrix& features_in, const KernelLayout& layout,
                         const ConvWeights& weights, const ConvConfig& cfg);
/// As above with precomputed neighbourhoods.
FeatureMatrix conv_layer(const GaussianIndex& index, const FeatureMatrix& features_in, const KernelLayout& layout,
                         const ConvWeights& weights, const ConvConfig& cfg,
                         const std::vector<std::vector<std::size_t>>& neighborhoods);

/// [1, opacity, lambda_max / lambda_min, trace(Sigma) / sigma^2] per primitive.
FeatureMatrix input_features(const GaussianIndex& index, double kernel_radius);

double default_kernel_radius(const GaussianModel& model);

/// Runs all layers with a ramp between them and derives the detail score.
FeatureField extract_features(const GaussianModel& model, const ConvConfig& cfg);
FeatureField extract_features(const GaussianModel& model, const ConvConfig& cfg, const KernelLayout& layout);

/// Flat debug dump: "GSFEAT01", u32 layer count, then per layer u32 rows, u32 cols and
/// row-major float32 values (little-endian).
void dump_feature_binary(const FeatureField& field, const std::filesystem::path& path);

}  // namespace gsfuse
