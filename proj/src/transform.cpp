#include "gsfuse/transform.hpp"

#include <cmath>
#include <string>

#include "gsfuse/error.hpp"

namespace gsfuse {

SimilarityTransform SimilarityTransform::from_axis_angle(const Vec3& axis, double angle_rad, const Vec3& t,
                                                         double s) {
  SimilarityTransform T;
  T.rotation = Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
  T.translation = t;
  T.scale = s;
  return T;
}

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.rotation = rotation.transpose();
  inv.scale = 1.0 / scale;
  inv.translation = -inv.scale * (inv.rotation * translation);
  return inv;
}

SimilarityTransform SimilarityTransform::operator*(const SimilarityTransform& other) const {
  SimilarityTransform out;
  out.rotation = rotation * other.rotation;
  out.scale = scale * other.scale;
  out.translation = scale * (rotation * other.translation) + translation;
  return out;
}

void SimilarityTransform::validate() const {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw ValidationError("similarity transform contains non-finite values");
  }
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).norm();
  if (ortho > 1e-9) {
    throw ValidationError("similarity transform rotation is not orthonormal (|R^T R - I| = " +
                          std::to_string(ortho) + ")");
  }
  if (rotation.determinant() <= 0.0) {
    throw ValidationError("similarity transform rotation has non-positive determinant");
  }
  if (!std::isfinite(scale) || scale <= 0.0) {
    throw ValidationError("similarity transform scale must be finite and positive");
  }
}

}  // namespace gsfuse
