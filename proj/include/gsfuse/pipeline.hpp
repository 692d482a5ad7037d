#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gsfuse/fusion.hpp"
#include "gsfuse/gafeat.hpp"
#include "gsfuse/json_io.hpp"
#include "gsfuse/registration.hpp"
#include "gsfuse/skeleton.hpp"
#include "gsfuse/synth.hpp"

namespace gsfuse {

struct EvalConfig {
  double coverage_eps = 0.1;                // m
  std::optional<double> redundancy_eps;     // m; defaults to the median nearest-neighbour spacing of A

  void validate() const;
};

/// Every stage's configuration plus the file locations of one run.
struct PipelineConfig {
  SkeletonConfig skeleton;
  ConvConfig conv;
  RegistrationConfig registration;
  FusionConfig fusion;
  EvalConfig eval;
  int threads = 0;  // 0 = hardware concurrency
  std::vector<std::string> inputs;
  std::string output;
  std::string report;

  void validate() const;
};

Json to_json(const PipelineConfig& c);
/// Overlays "skeleton", "conv", "registration", "fusion", "eval", "threads" sections.
void merge_json(const Json& j, PipelineConfig& c);

struct SkeletonRun {
  RefineResult result;
  SkeletonMetrics metrics;
  double time_s = 0.0;
};

/// Gaussian-aware extraction, or the covariance-blind baseline when `euclidean_baseline` is set.
SkeletonRun run_skeleton(const GaussianModel& model, const SkeletonConfig& cfg, bool euclidean_baseline,
                         const std::vector<Polyline>* reference = nullptr);

struct FusionRun {
  GaussianModel b_registered;
  Skeleton skeleton_a;
  Skeleton skeleton_b;
  FusionResult fusion;
};

/// Maps B into A, extracts both skeletons and feature fields, merges the skeletons and fuses.
FusionRun run_fusion(const GaussianModel& a, const GaussianModel& b, const SimilarityTransform& b_to_a,
                     const PipelineConfig& cfg, bool center_proximity_baseline);

/// Fraction of `samples` with a point of `points` within eps (inclusive).
double coverage(std::span<const Vec3> points, std::span<const Vec3> samples, double eps);

/// Origin of a fused primitive: which input it was copied from and its index there.
struct Provenance {
  Owner owner = Owner::A;
  std::size_t index = 0;
};

/// Identifies every fused primitive by its float-rounded mean among A and registered B.
/// Entries are empty for primitives found in neither.
std::vector<std::optional<Provenance>> trace_provenance(const GaussianModel& fused, const GaussianModel& a,
                                                        const GaussianModel& b_registered);

struct EvalMetrics {
  double coverage = 0.0;
  std::optional<double> redundancy;
  std::optional<double> detail_retention;
  std::size_t fused_count = 0;
  std::size_t untraced = 0;
};

/// Coverage of the ground-truth structure samples; redundancy and detail retention when the
/// inputs are available to trace each fused primitive back to its scene source.
EvalMetrics evaluate(const GaussianModel& fused, const GroundTruth& gt, const GaussianModel* a,
                     const GaussianModel* b_registered, const EvalConfig& cfg);

Json to_json(const EvalMetrics& m);

}  // namespace gsfuse
