#include "gsfuse/gs_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>

#include "gsfuse/error.hpp"
#include "gsfuse/kdtree.hpp"

namespace gsfuse {

bool GaussianPrimitive::operator==(const GaussianPrimitive& o) const {
  return mean == o.mean && log_scale == o.log_scale && rotation.coeffs() == o.rotation.coeffs() &&
         opacity_logit == o.opacity_logit && sh_dc == o.sh_dc && sh_rest == o.sh_rest;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Mat3 rotation_matrix(const GaussianPrimitive& p) { return p.rotation.normalized().toRotationMatrix(); }

namespace {

Vec3 clamped_variances(const Vec3& log_scale) {
  Vec3 v;
  for (int k = 0; k < 3; ++k) v[k] = std::max(std::exp(2.0 * log_scale[k]), kCovarianceFloor);
  return v;
}

}  // namespace

Mat3 covariance(const GaussianPrimitive& p) {
  const Mat3 R = rotation_matrix(p);
  const Mat3 S = R * clamped_variances(p.log_scale).asDiagonal() * R.transpose();
  return 0.5 * (S + S.transpose());
}

GaussianGeometry geometry(const GaussianPrimitive& p) {
  GaussianGeometry g;
  g.frame = rotation_matrix(p);
  g.variances = clamped_variances(p.log_scale);
  g.covariance = g.frame * g.variances.asDiagonal() * g.frame.transpose();
  g.covariance = 0.5 * (g.covariance + g.covariance.transpose()).eval();
  g.precision = g.frame * g.variances.cwiseInverse().asDiagonal() * g.frame.transpose();
  g.precision = 0.5 * (g.precision + g.precision.transpose()).eval();
  g.lambda_min = g.variances.minCoeff();
  g.lambda_max = g.variances.maxCoeff();
  return g;
}

void validate_primitive(const GaussianPrimitive& p, std::size_t index) {
  const auto fail = [index](const std::string& what) {
    throw ValidationError("primitive " + std::to_string(index) + ": " + what);
  };
  if (!p.mean.allFinite()) fail("non-finite mean");
  if (!p.log_scale.allFinite()) fail("non-finite log_scale");
  for (int k = 0; k < 3; ++k) {
    const double s = std::exp(p.log_scale[k]);
    if (!std::isfinite(s) || !(s > 0.0)) fail("exp(log_scale) is not finite and positive");
    if (!std::isfinite(s * s)) fail("covariance eigenvalue overflows");
  }
  if (!p.rotation.coeffs().allFinite()) fail("non-finite rotation");
  if (!(p.rotation.norm() > 0.0)) fail("zero-norm rotation quaternion");
  if (!std::isfinite(p.opacity_logit)) fail("non-finite opacity");
  if (!p.sh_dc.allFinite()) fail("non-finite SH DC coefficients");
  for (const auto& c : p.sh_rest) {
    if (!c.allFinite()) fail("non-finite SH coefficients");
  }
  const Vec3 v = clamped_variances(p.log_scale);
  if (v.minCoeff() < kCovarianceFloor) fail("covariance below SPD floor after regularisation");
}

GaussianModel::GaussianModel(std::vector<GaussianPrimitive> primitives) : primitives_(std::move(primitives)) {
  if (primitives_.empty()) return;

  const std::size_t rest = primitives_.front().sh_rest.size();
  for (std::size_t i = 0; i < primitives_.size(); ++i) {
    if (primitives_[i].sh_rest.size() != rest) {
      throw ValidationError("primitive " + std::to_string(i) + ": inconsistent SH coefficient count");
    }
  }
  sh_degree_ = -1;
  for (int d = 0; d <= 4; ++d) {
    if (sh_rest_count(d) == rest) sh_degree_ = d;
  }
  if (sh_degree_ < 0) throw ValidationError("unsupported SH coefficient count " + std::to_string(rest));

  // Sum in a canonical order so the centroid does not depend on primitive order.
  std::vector<std::size_t> order(primitives_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
    const auto& pa = primitives_[a];
    const auto& pb = primitives_[b];
    const std::array<double, 4> ka{pa.mean.x(), pa.mean.y(), pa.mean.z(), pa.opacity_logit};
    const std::array<double, 4> kb{pb.mean.x(), pb.mean.y(), pb.mean.z(), pb.opacity_logit};
    return ka < kb;
  });
  Vec3 acc = Vec3::Zero();
  double wsum = 0.0;
  for (std::size_t i : order) {
    const double w = opacity(primitives_[i]);
    acc += w * primitives_[i].mean;
    wsum += w;
  }
  if (wsum > 0.0) {
    centroid_ = acc / wsum;
  } else {
    centroid_ = Vec3::Zero();
    for (std::size_t i : order) centroid_ += primitives_[i].mean;
    centroid_ /= static_cast<double>(primitives_.size());
  }
  radius_ = 0.0;
  for (const auto& p : primitives_) radius_ = std::max(radius_, (p.mean - centroid_).norm());
}

std::vector<Vec3> GaussianModel::means() const {
  std::vector<Vec3> out;
  out.reserve(primitives_.size());
  for (const auto& p : primitives_) out.push_back(p.mean);
  return out;
}

GaussianModel apply_transform(const GaussianModel& model, const SimilarityTransform& T) {
  const Eigen::Quaterniond q(T.rotation);
  const double log_s = std::log(T.scale);
  std::vector<GaussianPrimitive> out = model.primitives();
  for (auto& p : out) {
    p.mean = T.apply(p.mean);
    p.rotation = (q * p.rotation).normalized();
    p.log_scale.array() += log_s;
  }
  return GaussianModel(std::move(out));
}

double median_nn_spacing(const GaussianModel& model) {
  if (model.size() < 2) return 0.0;
  const std::vector<Vec3> pts = model.means();
  const KdTree tree(pts);
  std::vector<double> d(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto nn = tree.knn(pts[i], 2);
    // nn[0] is the point itself unless duplicates exist; either way the second entry is the nearest other point.
    d[i] = std::sqrt(nn.size() > 1 ? nn[1].dist_sq : 0.0);
  }
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

}  // namespace gsfuse
