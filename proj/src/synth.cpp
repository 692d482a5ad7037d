#include "gsfuse/synth.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <numbers>
#include <numeric>
#include <utility>

#include <Eigen/Eigenvalues>

#include "gsfuse/error.hpp"
#include "gsfuse/random.hpp"

namespace gsfuse {

namespace {

constexpr double kPi = std::numbers::pi;

/// Unit vectors completing `n` to a right-handed orthonormal frame.
std::pair<Vec3, Vec3> complete_frame(const Vec3& n) {
  const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 e1 = n.cross(helper).normalized();
  return {e1, n.cross(e1)};
}

struct Sampled {
  std::vector<GaussianPrimitive> primitives;
  std::vector<bool> detail;
};

class PrimitiveFactory {
 public:
  PrimitiveFactory(const Structure& s, int sh_degree, Rng& rng) : s_(s), sh_degree_(sh_degree), rng_(rng) {}

  /// `axes` columns are the principal directions, `stds` the nominal standard deviations.
  GaussianPrimitive make(const Vec3& position, const Mat3& axes, const Vec3& stds, double opacity_lo,
                         double opacity_hi) {
    GaussianPrimitive p;
    p.mean = position;
    for (int k = 0; k < 3; ++k) p.log_scale[k] = std::log(stds[k]) + 0.1 * rng_.normal();
    Mat3 R = axes;
    if (R.determinant() < 0.0) R.col(2) = -R.col(2);
    p.rotation = Eigen::Quaterniond(R).normalized();
    const double alpha = rng_.uniform(opacity_lo, opacity_hi);
    p.opacity_logit = std::log(alpha / (1.0 - alpha));
    for (int k = 0; k < 3; ++k) p.sh_dc[k] = rng_.uniform(-1.0, 1.0);
    p.sh_rest.resize(sh_rest_count(sh_degree_));
    for (auto& c : p.sh_rest) c = Vec3(rng_.normal(), rng_.normal(), rng_.normal()) * 0.1;
    return p;
  }

  /// Elongated along `tangent`, rolled by a random angle around it.
  GaussianPrimitive along_curve(const Vec3& position, const Vec3& tangent) {
    auto [e1, e2] = complete_frame(tangent);
    const double roll = rng_.uniform(0.0, 2.0 * kPi);
    Mat3 axes;
    axes.col(0) = tangent;
    axes.col(1) = std::cos(roll) * e1 + std::sin(roll) * e2;
    axes.col(2) = tangent.cross(axes.col(1));
    const double across = s_.along_scale / s_.anisotropy;
    return make(position, axes, Vec3(s_.along_scale, across, across), s_.opacity_min, s_.opacity_max);
  }

  /// Flat disc in the plane spanned by t1, t2 with a random in-plane orientation.
  GaussianPrimitive on_surface(const Vec3& position, const Vec3& t1, const Vec3& t2, double along) {
    const double phi = rng_.uniform(0.0, kPi);
    Mat3 axes;
    axes.col(0) = std::cos(phi) * t1 + std::sin(phi) * t2;
    axes.col(2) = t1.cross(t2).normalized();
    axes.col(1) = axes.col(2).cross(axes.col(0));
    return make(position, axes, Vec3(along, 0.5 * along, along / s_.anisotropy), s_.opacity_min, s_.opacity_max);
  }

  /// Elongated along a random direction through `joint`, mean shifted along that direction.
  GaussianPrimitive spoke(const Vec3& joint) {
    Vec3 dir(rng_.normal(), rng_.normal(), rng_.normal());
    dir.normalize();
    const double shift = s_.spoke_offset * rng_.uniform(-1.0, 1.0);
    return along_curve(joint + shift * dir, dir);
  }

  GaussianPrimitive floater(const Vec3& anchor) {
    Vec3 dir(rng_.normal(), rng_.normal(), rng_.normal());
    dir.normalize();
    const double dist = s_.floater_offset * rng_.uniform(0.5, 1.5);
    const Eigen::Quaterniond q =
        Eigen::Quaterniond(rng_.normal(), rng_.normal(), rng_.normal(), rng_.normal()).normalized();
    const double sd = s_.floater_scale * s_.along_scale;
    return make(anchor + dist * dir, q.toRotationMatrix(), Vec3(sd, 0.8 * sd, 0.6 * sd), 0.05, 0.3);
  }

  Rng& rng() { return rng_; }

 private:
  const Structure& s_;
  int sh_degree_;
  Rng& rng_;
};

/// Arc-length parametrised curve: position and unit tangent at arc length `l`.
struct Curve {
  double length = 0.0;
  std::function<Vec3(double)> position;
  std::function<Vec3(double)> tangent;
};

Curve make_curve(const Structure& s) {
  Curve c;
  if (s.kind == StructureKind::Segment) {
    const Vec3 d = s.b - s.a;
    c.length = d.norm();
    const Vec3 t = d / c.length;
    const Vec3 a = s.a;
    c.position = [a, t](double l) { return Vec3(a + l * t); };
    c.tangent = [t](double) { return t; };
  } else {
    const Vec3 n = s.normal.normalized();
    auto [e1, e2] = complete_frame(n);
    const double r = s.radius, a0 = s.start_angle, sign = s.sweep >= 0.0 ? 1.0 : -1.0;
    const Vec3 ctr = s.center;
    c.length = r * std::abs(s.sweep);
    c.position = [=](double l) {
      const double th = a0 + sign * l / r;
      return Vec3(ctr + r * (std::cos(th) * e1 + std::sin(th) * e2));
    };
    c.tangent = [=](double l) {
      const double th = a0 + sign * l / r;
      return Vec3(sign * (-std::sin(th) * e1 + std::cos(th) * e2));
    };
  }
  return c;
}

/// Intervals of arc length carrying primitives.
std::vector<std::pair<double, double>> dash_intervals(const Structure& s, double length, Rng& rng) {
  if (s.dash_on <= 0.0 || s.dash_off <= 0.0) return {{0.0, length}};
  std::vector<std::pair<double, double>> out;
  double start = 0.0;
  while (start < length) {
    const double on = s.dash_on * (1.0 + s.dash_jitter * rng.uniform(-1.0, 1.0));
    const double off = s.dash_off * (1.0 + s.dash_jitter * rng.uniform());
    out.emplace_back(start, std::min(start + on, length));
    start += on + off;
  }
  return out;
}

double map_to_intervals(const std::vector<std::pair<double, double>>& iv, double u) {
  for (const auto& [lo, hi] : iv) {
    if (u <= hi - lo) return lo + u;
    u -= hi - lo;
  }
  return iv.back().second;
}

void sample_curve(const Structure& s, PrimitiveFactory& f, Sampled& out, std::vector<Polyline>& lines,
                  std::vector<Vec3>& samples, double spacing) {
  const Curve c = make_curve(s);
  if (s.joint_spacing > 0.0) {
    const auto joints = static_cast<std::size_t>(std::floor(c.length / s.joint_spacing)) + 1;
    for (std::size_t k = 0; k < joints; ++k) {
      const Vec3 joint = c.position(static_cast<double>(k) * s.joint_spacing);
      for (int m = 0; m < s.spokes; ++m) {
        out.primitives.push_back(f.spoke(joint));
        out.detail.push_back(false);
      }
      samples.push_back(joint);
    }
    const int pieces = std::max(1, static_cast<int>(std::ceil(c.length / spacing)));
    Polyline line;
    for (int k = 0; k <= pieces; ++k) line.push_back(c.position(c.length * k / pieces));
    lines.push_back(std::move(line));
    return;
  }
  const auto iv = dash_intervals(s, c.length, f.rng());
  double on_length = 0.0;
  for (const auto& [lo, hi] : iv) on_length += hi - lo;
  const auto n = static_cast<std::size_t>(std::llround(s.density * on_length));
  Rng& rng = f.rng();
  for (std::size_t k = 0; k < n; ++k) {
    const double l = map_to_intervals(iv, (static_cast<double>(k) + rng.uniform()) / static_cast<double>(n) * on_length);
    out.primitives.push_back(f.along_curve(c.position(l), c.tangent(l)));
    out.detail.push_back(false);
  }
  const auto nf = static_cast<std::size_t>(std::llround(s.floater_fraction * static_cast<double>(n)));
  for (std::size_t k = 0; k < nf; ++k) {
    const double l = map_to_intervals(iv, rng.uniform() * on_length);
    out.primitives.push_back(f.floater(c.position(l)));
    out.detail.push_back(false);
  }

  const int pieces = std::max(1, static_cast<int>(std::ceil(c.length / spacing)));
  Polyline line;
  for (int k = 0; k <= pieces; ++k) line.push_back(c.position(c.length * k / pieces));
  lines.push_back(std::move(line));
  for (const auto& [lo, hi] : iv) {
    const int m = std::max(1, static_cast<int>(std::ceil((hi - lo) / spacing)));
    for (int k = 0; k <= m; ++k) samples.push_back(c.position(lo + (hi - lo) * k / m));
  }
}

/// Surface patch origin + x*u_hat + y*v_hat + height(x)*n_hat with x in [0,|u|], y in [0,|v|].
struct Patch {
  Vec3 origin, u_hat, v_hat, n_hat;
  double width = 0.0, depth = 0.0;
  double fold_x = 0.0, fold_height = 0.0, fold_width = 1.0;

  double height(double x) const {
    if (fold_height == 0.0) return 0.0;
    return fold_height * std::max(0.0, 1.0 - std::abs(x - fold_x) / fold_width);
  }
  double slope(double x) const {
    if (fold_height == 0.0 || std::abs(x - fold_x) >= fold_width) return 0.0;
    return (x < fold_x ? 1.0 : -1.0) * fold_height / fold_width;
  }
  Vec3 point(double x, double y) const { return origin + x * u_hat + y * v_hat + height(x) * n_hat; }
  Vec3 tangent_x(double x) const { return (u_hat + slope(x) * n_hat).normalized(); }
};

Patch make_patch(const Vec3& origin, const Vec3& u, const Vec3& v) {
  Patch p;
  p.origin = origin;
  p.width = u.norm();
  p.u_hat = u / p.width;
  const Vec3 v_perp = v - v.dot(p.u_hat) * p.u_hat;
  p.v_hat = v_perp.normalized();
  p.depth = v_perp.norm();
  p.n_hat = p.u_hat.cross(p.v_hat);
  return p;
}

void sample_patch(const Structure& s, const Patch& p, PrimitiveFactory& f, Sampled& out, std::vector<Vec3>& samples,
                  double spacing, bool ridge) {
  Rng& rng = f.rng();
  const auto n = static_cast<std::size_t>(std::llround(s.density * p.width * p.depth));
  const auto in_band = [&](double x) { return ridge && std::abs(x - p.fold_x) <= s.detail_band; };
  for (std::size_t k = 0; k < n; ++k) {
    const double x = rng.uniform() * p.width, y = rng.uniform() * p.depth;
    out.primitives.push_back(f.on_surface(p.point(x, y), p.tangent_x(x), p.v_hat, s.along_scale));
    out.detail.push_back(in_band(x));
  }
  if (ridge && s.detail_boost > 1.0) {
    const double lo = std::max(0.0, p.fold_x - s.detail_band), hi = std::min(p.width, p.fold_x + s.detail_band);
    const auto extra = static_cast<std::size_t>(std::llround(s.density * (s.detail_boost - 1.0) * (hi - lo) * p.depth));
    for (std::size_t k = 0; k < extra; ++k) {
      const double x = rng.uniform(lo, hi), y = rng.uniform() * p.depth;
      out.primitives.push_back(f.on_surface(p.point(x, y), p.v_hat, p.tangent_x(x), 0.5 * s.along_scale));
      out.detail.push_back(true);
    }
  }
  const auto nf = static_cast<std::size_t>(std::llround(s.floater_fraction * static_cast<double>(n)));
  for (std::size_t k = 0; k < nf; ++k) {
    const double x = rng.uniform() * p.width, y = rng.uniform() * p.depth;
    out.primitives.push_back(f.floater(p.point(x, y)));
    out.detail.push_back(false);
  }
  const int mx = std::max(1, static_cast<int>(std::ceil(p.width / spacing)));
  const int my = std::max(1, static_cast<int>(std::ceil(p.depth / spacing)));
  for (int i = 0; i <= mx; ++i) {
    for (int j = 0; j <= my; ++j) samples.push_back(p.point(p.width * i / mx, p.depth * j / my));
  }
}

Polyline patch_midline(const Patch& p) {
  if (p.width >= p.depth) return {p.point(0.0, 0.5 * p.depth), p.point(p.width, 0.5 * p.depth)};
  return {p.point(0.5 * p.width, 0.0), p.point(0.5 * p.width, p.depth)};
}

void sample_structure(const Structure& s, int sh_degree, Rng& rng, Sampled& out, std::vector<Polyline>& lines,
                      std::vector<Vec3>& samples, double spacing) {
  PrimitiveFactory f(s, sh_degree, rng);
  switch (s.kind) {
    case StructureKind::Segment:
    case StructureKind::Arc:
      sample_curve(s, f, out, lines, samples, spacing);
      break;
    case StructureKind::Plane: {
      const Patch p = make_patch(s.origin, s.u, s.v);
      sample_patch(s, p, f, out, samples, spacing, false);
      lines.push_back(patch_midline(p));
      break;
    }
    case StructureKind::Ridge: {
      Patch p = make_patch(s.origin, s.u, s.v);
      p.fold_x = s.fold_position * p.width;
      p.fold_height = s.fold_height;
      p.fold_width = s.fold_width;
      sample_patch(s, p, f, out, samples, spacing, true);
      lines.push_back({p.point(p.fold_x, 0.0), p.point(p.fold_x, p.depth)});
      break;
    }
    case StructureKind::BoxShell: {
      const Vec3 h = s.half_extents;
      for (int axis = 0; axis < 3; ++axis) {
        const int i1 = (axis + 1) % 3, i2 = (axis + 2) % 3;
        for (const double side : {-1.0, 1.0}) {
          Vec3 origin = s.center;
          origin[axis] += side * h[axis];
          origin[i1] -= h[i1];
          origin[i2] -= h[i2];
          Vec3 u = Vec3::Zero(), v = Vec3::Zero();
          u[i1] = 2.0 * h[i1];
          v[i2] = 2.0 * h[i2];
          sample_patch(s, make_patch(origin, u, v), f, out, samples, spacing, false);
        }
      }
      int longest = 0;
      h.maxCoeff(&longest);
      Vec3 lo = s.center, hi = s.center;
      lo[longest] -= h[longest];
      hi[longest] += h[longest];
      lines.push_back({lo, hi});
      break;
    }
  }
}

std::uint64_t structure_seed(std::uint64_t seed, std::size_t k, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(0x51A7ull * (k + 1) + stream));
}

}  // namespace

void SceneSpec::validate() const {
  if (structures.empty()) throw ConfigError("scene needs at least one structure");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be >= 0");
  if (sh_degree < 0 || sh_degree > 3) throw ConfigError("sh_degree must be in [0, 3]");
  if (!(sample_spacing > 0.0)) throw ConfigError("sample_spacing must be > 0");
  for (std::size_t k = 0; k < structures.size(); ++k) {
    const Structure& s = structures[k];
    const auto fail = [k](const std::string& what) {
      throw ConfigError("structure " + std::to_string(k) + ": " + what);
    };
    if (!(s.density > 0.0) || !std::isfinite(s.density)) fail("density must be > 0");
    if (!(s.along_scale > 0.0)) fail("along_scale must be > 0");
    if (!(s.anisotropy >= 1.0)) fail("anisotropy must be >= 1");
    if (!(s.opacity_min > 0.0 && s.opacity_min <= s.opacity_max && s.opacity_max < 1.0))
      fail("opacity range must satisfy 0 < min <= max < 1");
    if (s.floater_fraction < 0.0) fail("floater_fraction must be >= 0");
    if (s.dash_on < 0.0 || s.dash_off < 0.0) fail("dash lengths must be >= 0");
    if (s.joint_spacing < 0.0 || s.spokes < 1 || s.spoke_offset < 0.0) fail("invalid joint parameters");
    if (s.dash_jitter < 0.0 || s.dash_jitter >= 1.0) fail("dash_jitter must be in [0, 1)");
    switch (s.kind) {
      case StructureKind::Segment:
        if (!((s.b - s.a).norm() > 0.0)) fail("segment endpoints coincide");
        break;
      case StructureKind::Arc:
        if (!(s.radius > 0.0) || s.sweep == 0.0 || !(s.normal.norm() > 0.0)) fail("degenerate arc");
        break;
      case StructureKind::Plane:
      case StructureKind::Ridge:
        if (!(s.u.cross(s.v).norm() > 0.0)) fail("patch edges are parallel");
        if (s.kind == StructureKind::Ridge &&
            (s.fold_position < 0.0 || s.fold_position > 1.0 || !(s.fold_width > 0.0) || s.detail_band < 0.0 ||
             s.detail_boost < 1.0))
          fail("invalid ridge parameters");
        break;
      case StructureKind::BoxShell:
        if (!(s.half_extents.minCoeff() > 0.0)) fail("box half extents must be > 0");
        break;
    }
  }
}

GeneratedScene generate(const SceneSpec& spec) {
  spec.validate();
  GeneratedScene scene;
  std::vector<GaussianPrimitive> all;
  for (std::size_t k = 0; k < spec.structures.size(); ++k) {
    Rng rng(structure_seed(spec.seed, k, 0));
    Sampled part;
    sample_structure(spec.structures[k], spec.sh_degree, rng, part, scene.skeleton_polylines, scene.structure_samples,
                     spec.sample_spacing);
    Rng noise(structure_seed(spec.seed, k, 1));
    for (auto& p : part.primitives) {
      if (spec.noise_sigma > 0.0) p.mean += spec.noise_sigma * Vec3(noise.normal(), noise.normal(), noise.normal());
    }
    all.insert(all.end(), part.primitives.begin(), part.primitives.end());
    scene.detail_labels.insert(scene.detail_labels.end(), part.detail.begin(), part.detail.end());
  }
  if (all.empty()) throw DegenerateInputError("scene produced no primitives");
  scene.model = GaussianModel(std::move(all));
  return scene;
}

namespace {

Vec3 principal_axis(const std::vector<Vec3>& pts) {
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 C = Mat3::Zero();
  for (const auto& p : pts) C += (p - mean) * (p - mean).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> es(C);
  Vec3 axis = es.eigenvectors().col(2);
  Eigen::Index big = 0;
  axis.cwiseAbs().maxCoeff(&big);
  if (axis[big] < 0.0) axis = -axis;
  return axis;
}

struct SplitPlan {
  Vec3 axis;
  double a_max = 0.0;  // A keeps projections <= a_max
  double b_min = 0.0;  // B keeps projections >= b_min
};

SplitPlan plan_split(const std::vector<Vec3>& pts, const SplitOptions& opts) {
  if (!(opts.overlap_fraction > 0.0 && opts.overlap_fraction < 1.0))
    throw ConfigError("overlap_fraction must be in (0, 1)");
  SplitPlan plan;
  plan.axis = opts.split_axis ? opts.split_axis->normalized() : principal_axis(pts);
  std::vector<double> proj(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) proj[i] = pts[i].dot(plan.axis);
  std::sort(proj.begin(), proj.end());
  const double n = static_cast<double>(proj.size());
  const double f = opts.overlap_fraction;
  const auto hi = static_cast<std::size_t>(std::ceil(n * (1.0 + f) / 2.0));
  const auto lo = static_cast<std::size_t>(std::floor(n * (1.0 - f) / 2.0));
  if (hi == 0 || lo >= proj.size()) throw DegenerateInputError("split leaves one side empty");
  plan.a_max = proj[hi - 1];
  plan.b_min = proj[lo];
  return plan;
}

SubmapPair assemble(const GeneratedScene& source_a, const GeneratedScene& source_b, const SplitPlan& plan,
                    const SplitOptions& opts, bool detail_in_a) {
  SubmapPair out;
  out.gt.transform = opts.transform;
  const SimilarityTransform to_b = opts.transform.inverse();

  std::vector<GaussianPrimitive> pa;
  for (std::size_t i = 0; i < source_a.model.size(); ++i) {
    const double x = source_a.model[i].mean.dot(plan.axis);
    if (x > plan.a_max) continue;
    pa.push_back(source_a.model[i]);
    out.gt.source_a.push_back(i);
    out.gt.overlap_a.push_back(x >= plan.b_min);
    out.gt.detail_a.push_back(detail_in_a && source_a.detail_labels[i]);
  }
  std::vector<std::size_t> ib;
  for (std::size_t i = 0; i < source_b.model.size(); ++i) {
    if (source_b.model[i].mean.dot(plan.axis) >= plan.b_min) ib.push_back(i);
  }
  if (pa.empty() || ib.empty()) throw DegenerateInputError("split leaves one side empty");

  Rng rng(splitmix64(opts.seed ^ 0xB0B0B0B0ull));
  for (std::size_t k = ib.size(); k > 1; --k) std::swap(ib[k - 1], ib[rng.below(k)]);
  std::vector<GaussianPrimitive> pb;
  for (const std::size_t i : ib) {
    GaussianPrimitive p = source_b.model[i];
    const double x = p.mean.dot(plan.axis);
    p.mean = to_b.apply(p.mean);
    p.rotation = (Eigen::Quaterniond(to_b.rotation) * p.rotation).normalized();
    p.log_scale.array() += std::log(to_b.scale);
    if (opts.noise_sigma > 0.0) p.mean += opts.noise_sigma * Vec3(rng.normal(), rng.normal(), rng.normal());
    pb.push_back(std::move(p));
    out.gt.source_b.push_back(i);
    out.gt.overlap_b.push_back(x <= plan.a_max);
    out.gt.detail_b.push_back(source_b.detail_labels[i]);
  }
  out.a = GaussianModel(std::move(pa));
  out.b = GaussianModel(std::move(pb));
  out.gt.skeleton_polylines = source_b.skeleton_polylines;
  out.gt.structure_samples = source_b.structure_samples;
  return out;
}

}  // namespace

SubmapPair split_pair(const GeneratedScene& scene, const SplitOptions& opts) {
  opts.transform.validate();
  if (scene.model.empty()) throw DegenerateInputError("cannot split an empty scene");
  const SplitPlan plan = plan_split(scene.model.means(), opts);
  return assemble(scene, scene, plan, opts, true);
}

SubmapPair planted_detail_pair(const SceneSpec& spec, const SplitOptions& opts) {
  opts.transform.validate();
  const bool has_ridge = std::any_of(spec.structures.begin(), spec.structures.end(),
                                     [](const Structure& s) { return s.kind == StructureKind::Ridge; });
  if (!has_ridge) throw ConfigError("planted detail pair needs a ridge structure");
  const GeneratedScene truth = generate(spec);
  SceneSpec flat_spec = spec;
  for (auto& s : flat_spec.structures) {
    if (s.kind != StructureKind::Ridge) continue;
    s.fold_height = 0.0;
    s.detail_boost = 1.0;
  }
  const GeneratedScene flat = generate(flat_spec);
  const SplitPlan plan = plan_split(truth.model.means(), opts);
  return assemble(flat, truth, plan, opts, false);
}

namespace {

/// Indoor-like clutter around `offset`: floor, boxes, a folded panel, beams and a pipe arc.
void add_clutter_tile(SceneSpec& spec, Rng& rng, const Vec3& offset) {
  const auto add = [&](Structure s) {
    s.along_scale = 0.15;
    s.anisotropy = 4.0;
    spec.structures.push_back(s);
  };
  Structure floor;
  floor.kind = StructureKind::Plane;
  floor.origin = offset + Vec3(-3.0, -1.5, -1.0);
  floor.u = Vec3(6.0, 0.0, 0.0);
  floor.v = Vec3(0.0, 3.0, 0.0);
  floor.density = 25.0;
  add(floor);
  for (int i = 0; i < 3; ++i) {
    Structure box;
    box.kind = StructureKind::BoxShell;
    box.center = offset + Vec3(-2.0 + 4.0 * (i + 0.5) / 3.0 + rng.uniform(-0.3, 0.3), rng.uniform(-0.6, 0.6),
                               -0.5 + rng.uniform(0.0, 0.3));
    box.half_extents = Vec3(rng.uniform(0.25, 0.5), rng.uniform(0.25, 0.5), rng.uniform(0.25, 0.6));
    box.density = 30.0;
    add(box);
  }
  Structure ridge;
  ridge.kind = StructureKind::Ridge;
  ridge.origin = offset + Vec3(-2.5, 1.2, -0.8);
  ridge.u = Vec3(5.0, 0.0, 0.0);
  ridge.v = Vec3(0.0, 0.3, 0.6);
  ridge.fold_position = 0.3 + rng.uniform(0.0, 0.4);
  ridge.fold_height = 0.3;
  ridge.detail_band = 0.15;
  ridge.detail_boost = 2.0;
  ridge.density = 30.0;
  add(ridge);
  for (int i = 0; i < 4; ++i) {
    Structure seg;
    seg.kind = StructureKind::Segment;
    seg.a = offset + Vec3(rng.uniform(-3.0, 3.0), rng.uniform(-1.5, 1.5), rng.uniform(-1.0, 1.0));
    seg.b = seg.a + Vec3(rng.normal(), rng.normal(), rng.normal()).normalized() * rng.uniform(1.5, 3.0);
    seg.density = 15.0;
    add(seg);
  }
  Structure arc;
  arc.kind = StructureKind::Arc;
  arc.center = offset + Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 0.5), 0.3);
  arc.radius = rng.uniform(0.8, 1.5);
  arc.normal = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
  arc.sweep = 1.5 * kPi;
  arc.density = 15.0;
  add(arc);
}

}  // namespace

SceneSpec preset_scene(const std::string& name, std::uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  Rng rng(splitmix64(seed ^ 0x5CE7Eull));
  const auto jitter = [&rng](double amp) { return Vec3(rng.uniform(-amp, amp), rng.uniform(-amp, amp), rng.uniform(-amp, amp)); };

  if (name == "curves" || name == "isotropic-blobs") {
    // Truss-like chains: one DBSCAN cluster per joint, so each chain becomes a node chain.
    const bool iso = name == "isotropic-blobs";
    const auto chain = [&](Structure s) {
      s.joint_spacing = 2.0;
      s.spokes = 12;
      s.spoke_offset = 0.2;
      s.along_scale = iso ? 0.08 : 0.25;
      s.anisotropy = iso ? 1.0 : 8.0;
      spec.structures.push_back(s);
    };
    for (int k = 0; k < 2; ++k) {
      Structure line;
      line.kind = StructureKind::Segment;
      const Vec3 dir = (Vec3::UnitX() + jitter(0.15)).normalized();
      const Vec3 mid = Vec3(0.0, -8.0 + 16.0 * k, 0.0) + jitter(0.5);
      const double half = 12.0 + rng.uniform(-1.0, 1.0);
      line.a = mid - half * dir;
      line.b = mid + half * dir;
      chain(line);
    }
    Structure arc;
    arc.kind = StructureKind::Arc;
    arc.center = jitter(0.5);
    arc.radius = 5.0 + rng.uniform(-0.5, 0.5);
    arc.normal = (Vec3::UnitZ() + jitter(0.3)).normalized();
    arc.start_angle = rng.uniform(0.0, 2.0 * kPi);
    arc.sweep = 2.0 * kPi * (1.0 - 1.0 / 16.0);
    chain(arc);
    spec.noise_sigma = 0.01;
    return spec;
  }
  if (name == "ridge") {
    Structure r;
    r.kind = StructureKind::Ridge;
    r.origin = Vec3(-1.5, -1.5, 0.0);
    r.u = Vec3(3.0, 0.0, 0.0);
    r.v = Vec3(0.0, 3.0, 0.0);
    r.fold_height = 0.3;
    r.fold_width = 0.3;
    r.detail_band = 0.1;
    r.detail_boost = 3.0;
    r.density = 400.0;
    r.along_scale = 0.04;
    spec.structures.push_back(r);
    return spec;
  }
  if (name == "registration") {
    add_clutter_tile(spec, rng, Vec3::Zero());
    return spec;
  }
  if (name == "large") {
    // An 11 x 6 grid of independent clutter tiles; a 50% split gives about 110k primitives in total.
    for (int i = 0; i < 11; ++i) {
      for (int j = 0; j < 6; ++j) add_clutter_tile(spec, rng, Vec3(6.5 * i, 3.5 * j, 0.0));
    }
    return spec;
  }
  if (name == "planted-ridge") {
    // The fold sits inside the overlap, on A's side of the split, where a centre-distance rule
    // prefers A's flattened copy.
    Structure ridge;
    ridge.kind = StructureKind::Ridge;
    ridge.origin = Vec3(0.0, 0.0, 0.0);
    ridge.u = Vec3(6.0, 0.0, 0.0);
    ridge.v = Vec3(0.0, 2.0, 0.0);
    ridge.fold_position = 0.42 + rng.uniform(-0.02, 0.02);
    ridge.fold_height = 0.06;
    ridge.fold_width = 0.4;
    ridge.detail_band = 0.2;
    ridge.detail_boost = 3.0;
    ridge.density = 40.0;
    ridge.along_scale = 0.15;
    ridge.anisotropy = 4.0;
    spec.structures.push_back(ridge);
    for (int i = 0; i < 2; ++i) {
      Structure seg;
      seg.kind = StructureKind::Segment;
      seg.a = Vec3(rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.8), 0.5 + 0.4 * i);
      seg.b = Vec3(rng.uniform(5.0, 5.8), rng.uniform(0.2, 1.8), 0.5 + 0.4 * i);
      seg.density = 15.0;
      seg.along_scale = 0.15;
      seg.anisotropy = 4.0;
      spec.structures.push_back(seg);
    }
    return spec;
  }
  throw ConfigError("unknown scene preset '" + name + "'");
}

}  // namespace gsfuse
