#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "gsfuse/transform.hpp"

namespace gsfuse {

/// Eigenvalue floor applied to every covariance (m^2).
inline constexpr double kCovarianceFloor = 1e-8;

/// One 3D-GS splat, stored in the activation-free parameterisation of the PLY file:
/// log-space scales, pre-sigmoid opacity and a (w, x, y, z) quaternion.
struct GaussianPrimitive {
  Vec3 mean = Vec3::Zero();
  Vec3 log_scale = Vec3::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  double opacity_logit = 0.0;
  Vec3 sh_dc = Vec3::Zero();
  /// Higher-order SH coefficients; triple k holds (R_k, G_k, B_k).
  std::vector<Vec3> sh_rest;

  bool operator==(const GaussianPrimitive& o) const;
};

double sigmoid(double x);

inline double opacity(const GaussianPrimitive& p) { return sigmoid(p.opacity_logit); }

Mat3 rotation_matrix(const GaussianPrimitive& p);

/// R * diag(exp(log_scale))^2 * R^T with eigenvalues clamped from below at kCovarianceFloor.
Mat3 covariance(const GaussianPrimitive& p);

/// Quantities derived from a primitive's covariance, cached for the hot loops.
struct GaussianGeometry {
  Mat3 covariance;
  Mat3 precision;  // inverse covariance
  Mat3 frame;      // columns are the principal axes (rotation matrix of the primitive)
  Vec3 variances;  // eigenvalues of covariance along the frame axes
  double lambda_min = 0.0;
  double lambda_max = 0.0;

  double mahalanobis_sq(const Vec3& d) const { return d.dot(precision * d); }
};

GaussianGeometry geometry(const GaussianPrimitive& p);

/// Number of SH triples in sh_rest for a given degree: (d+1)^2 - 1.
constexpr std::size_t sh_rest_count(int degree) {
  return static_cast<std::size_t>((degree + 1) * (degree + 1) - 1);
}

/// Throws ValidationError when a primitive violates the domain invariants. `index` is reported in the message.
void validate_primitive(const GaussianPrimitive& p, std::size_t index);

/// A sub-map: ordered primitives plus opacity-weighted centroid and max radius.
/// Immutable after construction.
class GaussianModel {
 public:
  GaussianModel() = default;
  explicit GaussianModel(std::vector<GaussianPrimitive> primitives);

  const std::vector<GaussianPrimitive>& primitives() const { return primitives_; }
  const GaussianPrimitive& operator[](std::size_t i) const { return primitives_[i]; }
  std::size_t size() const { return primitives_.size(); }
  bool empty() const { return primitives_.empty(); }

  const Vec3& centroid() const { return centroid_; }
  double radius() const { return radius_; }
  /// SH degree shared by all primitives (0 for an empty model).
  int sh_degree() const { return sh_degree_; }

  std::vector<Vec3> means() const;

  bool operator==(const GaussianModel& o) const { return primitives_ == o.primitives_; }

 private:
  std::vector<GaussianPrimitive> primitives_;
  Vec3 centroid_ = Vec3::Zero();
  double radius_ = 0.0;
  int sh_degree_ = 0;
};

/// Maps every primitive through T: mean -> sRx + t, rotation left-composed with R,
/// log_scale shifted by ln s. Opacity and SH coefficients are carried unchanged.
GaussianModel apply_transform(const GaussianModel& model, const SimilarityTransform& T);

/// Median Euclidean distance from each mean to its nearest other mean.
double median_nn_spacing(const GaussianModel& model);

}  // namespace gsfuse
