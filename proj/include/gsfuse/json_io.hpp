#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "gsfuse/fusion.hpp"
#include "gsfuse/gafeat.hpp"
#include "gsfuse/registration.hpp"
#include "gsfuse/skeleton.hpp"
#include "gsfuse/synth.hpp"
#include "gsfuse/transform.hpp"

namespace gsfuse {

using Json = nlohmann::ordered_json;

// Config readers overlay the keys present in the JSON onto the existing values and throw
// ConfigError on unknown keys or wrong types.
Json to_json(const SkeletonConfig& c);
void merge_json(const Json& j, SkeletonConfig& c);
Json to_json(const ConvConfig& c);
void merge_json(const Json& j, ConvConfig& c);
Json to_json(const RegistrationConfig& c);
void merge_json(const Json& j, RegistrationConfig& c);
Json to_json(const FusionConfig& c);
void merge_json(const Json& j, FusionConfig& c);

/// {"scale": s, "rotation": [9 values row-major], "translation": [3 values]}
Json to_json(const SimilarityTransform& t);
SimilarityTransform transform_from_json(const Json& j);

/// {"nodes": [[x,y,z],...], "assignment": [...], "clusters": [...]}
Json to_json(const Skeleton& s);
Skeleton skeleton_from_json(const Json& j);

Json to_json(const SceneSpec& s);
SceneSpec scene_spec_from_json(const Json& j);

Json to_json(const GroundTruth& gt);
GroundTruth ground_truth_from_json(const Json& j);

Json to_json(const SkeletonMetrics& m);
Json to_json(const RegistrationErrors& e);
Json to_json(const Scores& s);
/// Counts and thresholds; the per-pair table only when `verbose`.
Json to_json(const FusionReport& r, bool verbose);

Json read_json_file(const std::filesystem::path& path);
/// Writes with two-space indentation and a trailing newline.
void write_json_file(const Json& j, const std::filesystem::path& path);

}  // namespace gsfuse
