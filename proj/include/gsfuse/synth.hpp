#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gsfuse/gs_model.hpp"
#include "gsfuse/skeleton.hpp"
#include "gsfuse/transform.hpp"

namespace gsfuse {

enum class StructureKind { Segment, Arc, Plane, BoxShell, Ridge };

/// One parametric structure. Only the fields relevant to `kind` are read.
struct Structure {
  StructureKind kind = StructureKind::Segment;

  // Segment
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::UnitX();
  // Arc
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
  Vec3 normal = Vec3::UnitZ();
  double start_angle = 0.0;  // rad
  double sweep = 3.141592653589793;  // rad
  // Plane patch / ridge: origin + s*u + t*v with s, t in [0, 1]
  Vec3 origin = Vec3::Zero();
  Vec3 u = Vec3::UnitX();
  Vec3 v = Vec3::UnitY();
  // Box shell (axis aligned around `center`)
  Vec3 half_extents = Vec3::Ones();
  // Ridge: a tent-shaped fold running along v, at fraction fold_position of u
  double fold_position = 0.5;
  double fold_height = 0.1;   // m
  double fold_width = 0.3;    // m, half-width of the tent
  double detail_band = 0.1;   // m, half-width of the band labelled as detail
  double detail_boost = 3.0;  // density multiplier inside the band

  // Sampling
  double density = 100.0;     // primitives per m (curves) or per m^2 (surfaces)
  double along_scale = 0.05;  // m, standard deviation along the structure
  double anisotropy = 8.0;    // along / across standard deviation ratio
  double opacity_min = 0.5;
  double opacity_max = 0.95;
  // Curves only: alternate `dash_on` metres of primitives with `dash_off` metres of gap (0 = solid)
  double dash_on = 0.0;
  double dash_off = 0.0;
  double dash_jitter = 0.0;  // in [0, 1): dash lengths vary by +-jitter, gaps grow by up to +jitter
  // Curves only: when > 0, primitives are placed as truss joints every `joint_spacing` metres
  // instead of continuously. Each joint holds `spokes` elongated Gaussians whose axes cross at
  // the joint and whose means sit up to `spoke_offset` metres from it along their own axis.
  double joint_spacing = 0.0;
  int spokes = 12;
  double spoke_offset = 0.2;
  // Extra large, near-isotropic primitives scattered around the structure (fraction of its count)
  double floater_fraction = 0.0;
  double floater_scale = 3.0;   // floater std = floater_scale * along_scale
  double floater_offset = 0.1;  // m, typical distance from the structure
};

struct SceneSpec {
  std::vector<Structure> structures;
  double noise_sigma = 0.0;  // m, isotropic jitter of every mean
  std::uint64_t seed = 1;
  int sh_degree = 0;
  double sample_spacing = 0.05;  // m, spacing of the ground-truth structure samples

  void validate() const;
};

struct GeneratedScene {
  GaussianModel model;
  std::vector<Polyline> skeleton_polylines;
  std::vector<bool> detail_labels;
  std::vector<Vec3> structure_samples;
};

/// Samples Gaussians on every structure with covariances aligned to the local tangent frame.
GeneratedScene generate(const SceneSpec& spec);

struct GroundTruth {
  std::vector<Polyline> skeleton_polylines;  // A's frame
  SimilarityTransform transform;             // maps B into A
  std::vector<bool> overlap_a, overlap_b;
  std::vector<bool> detail_a, detail_b;
  std::vector<Vec3> structure_samples;       // A's frame
  std::vector<std::size_t> source_a, source_b;  // index of each primitive in the generated scene
};

struct SplitOptions {
  double overlap_fraction = 0.5;
  SimilarityTransform transform;  // ground-truth B -> A map
  double noise_sigma = 0.0;       // m, jitter applied to B's means in B's frame
  std::uint64_t seed = 0;
  std::optional<Vec3> split_axis;  // defaults to the principal axis of the means
};

struct SubmapPair {
  GaussianModel a;
  GaussianModel b;
  GroundTruth gt;
};

/// Splits along a plane into two halves sharing `overlap_fraction` of the primitives. B is
/// expressed in its own frame (inverse ground-truth transform), jittered and shuffled.
SubmapPair split_pair(const GeneratedScene& scene, const SplitOptions& opts);

/// A from a flattened copy of the scene (ridges at zero height, no detail band), B from the
/// true scene; both split with the true scene's plane. Detail exists only in B.
SubmapPair planted_detail_pair(const SceneSpec& spec, const SplitOptions& opts);

/// Named scene presets used by the CLI and the test suites.
/// "curves" (truss-like segments and an arc), "isotropic-blobs" (same layout with isotropic
/// primitives), "ridge", "registration" (indoor clutter), "planted-ridge", "large" (a grid of
/// clutter tiles, about 73k primitives).
SceneSpec preset_scene(const std::string& name, std::uint64_t seed);

}  // namespace gsfuse
