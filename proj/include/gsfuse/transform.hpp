#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gsfuse {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// x -> scale * rotation * x + translation. Maps sub-map B into the frame of A.
struct SimilarityTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  static SimilarityTransform identity() { return {}; }
  /// Rotation about a unit axis by angle (radians).
  static SimilarityTransform from_axis_angle(const Vec3& axis, double angle_rad, const Vec3& t = Vec3::Zero(),
                                             double s = 1.0);

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
  SimilarityTransform inverse() const;
  /// (this * other)(x) == this(other(x)).
  SimilarityTransform operator*(const SimilarityTransform& other) const;

  /// Throws ValidationError unless R is orthonormal with det +1 (1e-9) and scale is finite and positive.
  void validate() const;
};

}  // namespace gsfuse
