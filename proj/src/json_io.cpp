#include "gsfuse/json_io.hpp"

#include <fstream>
#include <set>

#include "gsfuse/error.hpp"

namespace gsfuse {

namespace {

Json vec_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const Json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) throw FormatError(what + ": expected an array of 3 numbers");
  Vec3 v;
  for (int k = 0; k < 3; ++k) {
    if (!j[k].is_number()) throw FormatError(what + ": expected numbers");
    v[k] = j[k].get<double>();
  }
  return v;
}

/// Reads present keys of an object, rejecting any key not listed.
class Overlay {
 public:
  Overlay(const Json& j, std::string what, std::set<std::string> keys) : j_(j), what_(std::move(what)) {
    if (!j.is_object()) throw ConfigError(what_ + ": expected a JSON object");
    for (const auto& [k, v] : j.items()) {
      if (!keys.contains(k)) throw ConfigError(what_ + ": unknown key '" + k + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) const {
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(what_ + ": bad value for '" + key + "'");
    }
  }

  void get_optional(const char* key, std::optional<double>& out) const {
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    double v = 0.0;
    get(key, v);
    out = v;
  }

 private:
  const Json& j_;
  std::string what_;
};

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

Json to_json(const SkeletonConfig& c) {
  return Json{{"dbscan_eps", c.dbscan_eps},   {"dbscan_min_pts", c.dbscan_min_pts},
              {"lambda", c.lambda},           {"step_size", c.step_size},
              {"conv_tol", c.conv_tol},       {"merge_dist", optional_json(c.merge_dist)},
              {"max_iters", c.max_iters},     {"laplacian_k", c.laplacian_k},
              {"connectivity_eta", c.connectivity_eta}};
}

void merge_json(const Json& j, SkeletonConfig& c) {
  const Overlay o(j, "skeleton config",
                  {"dbscan_eps", "dbscan_min_pts", "lambda", "step_size", "conv_tol", "merge_dist", "max_iters",
                   "laplacian_k", "connectivity_eta"});
  o.get("dbscan_eps", c.dbscan_eps);
  o.get("dbscan_min_pts", c.dbscan_min_pts);
  o.get("lambda", c.lambda);
  o.get("step_size", c.step_size);
  o.get("conv_tol", c.conv_tol);
  o.get_optional("merge_dist", c.merge_dist);
  o.get("max_iters", c.max_iters);
  o.get("laplacian_k", c.laplacian_k);
  o.get("connectivity_eta", c.connectivity_eta);
}

Json to_json(const ConvConfig& c) {
  return Json{{"num_neighbors", c.num_neighbors},
              {"mahalanobis_radius", c.mahalanobis_radius},
              {"kernel_count", c.kernel_count},
              {"kernel_radius", optional_json(c.kernel_radius)},
              {"layer_dims", c.layer_dims},
              {"weight_seed", c.weight_seed},
              {"kernel_frame", c.kernel_frame == KernelFrame::World ? "world" : "primitive"},
              {"concat_detail_layers", c.concat_detail_layers}};
}

void merge_json(const Json& j, ConvConfig& c) {
  const Overlay o(j, "conv config",
                  {"num_neighbors", "mahalanobis_radius", "kernel_count", "kernel_radius", "layer_dims", "weight_seed",
                   "kernel_frame", "concat_detail_layers"});
  o.get("num_neighbors", c.num_neighbors);
  o.get("mahalanobis_radius", c.mahalanobis_radius);
  o.get("kernel_count", c.kernel_count);
  o.get_optional("kernel_radius", c.kernel_radius);
  o.get("layer_dims", c.layer_dims);
  o.get("weight_seed", c.weight_seed);
  std::string frame = c.kernel_frame == KernelFrame::World ? "world" : "primitive";
  o.get("kernel_frame", frame);
  if (frame == "world") {
    c.kernel_frame = KernelFrame::World;
  } else if (frame == "primitive") {
    c.kernel_frame = KernelFrame::Primitive;
  } else {
    throw ConfigError("conv config: kernel_frame must be 'world' or 'primitive'");
  }
  o.get("concat_detail_layers", c.concat_detail_layers);
}

Json to_json(const RegistrationConfig& c) {
  return Json{{"match_ratio_test", c.match_ratio_test},
              {"ransac_iters", c.ransac_iters},
              {"inlier_tol", c.inlier_tol},
              {"min_inliers", c.min_inliers},
              {"seed", c.seed}};
}

void merge_json(const Json& j, RegistrationConfig& c) {
  const Overlay o(j, "registration config", {"match_ratio_test", "ransac_iters", "inlier_tol", "min_inliers", "seed"});
  o.get("match_ratio_test", c.match_ratio_test);
  o.get("ransac_iters", c.ransac_iters);
  o.get("inlier_tol", c.inlier_tol);
  o.get("min_inliers", c.min_inliers);
  o.get("seed", c.seed);
}

Json to_json(const FusionConfig& c) {
  return Json{{"eps_skel", optional_json(c.eps_skel)},
              {"eps_overlap", optional_json(c.eps_overlap)},
              {"delta", c.delta},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"gamma", c.gamma},
              {"tau", c.tau},
              {"gamma_on_skeleton", c.gamma_on_skeleton}};
}

void merge_json(const Json& j, FusionConfig& c) {
  const Overlay o(j, "fusion config",
                  {"eps_skel", "eps_overlap", "delta", "alpha", "beta", "gamma", "tau", "gamma_on_skeleton"});
  o.get_optional("eps_skel", c.eps_skel);
  o.get_optional("eps_overlap", c.eps_overlap);
  o.get("delta", c.delta);
  o.get("alpha", c.alpha);
  o.get("beta", c.beta);
  o.get("gamma", c.gamma);
  o.get("tau", c.tau);
  o.get("gamma_on_skeleton", c.gamma_on_skeleton);
}

Json to_json(const SimilarityTransform& t) {
  Json rot = Json::array();
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rot.push_back(t.rotation(r, c));
  }
  return Json{{"scale", t.scale}, {"rotation", rot}, {"translation", vec_json(t.translation)}};
}

SimilarityTransform transform_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("scale") || !j.contains("rotation") || !j.contains("translation"))
    throw FormatError("transform: expected keys scale, rotation, translation");
  SimilarityTransform t;
  const Json& rot = j.at("rotation");
  if (!rot.is_array() || rot.size() != 9) throw FormatError("transform: rotation must hold 9 numbers");
  try {
    t.scale = j.at("scale").get<double>();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) t.rotation(r, c) = rot[3 * r + c].get<double>();
    }
  } catch (const nlohmann::json::exception&) {
    throw FormatError("transform: non-numeric entry");
  }
  t.translation = vec_from(j.at("translation"), "transform translation");
  t.validate();
  return t;
}

Json to_json(const Skeleton& s) {
  Json nodes = Json::array();
  for (const auto& q : s.nodes) nodes.push_back(vec_json(q));
  return Json{{"nodes", nodes}, {"assignment", s.assignment}, {"clusters", s.cluster_of_node}};
}

Skeleton skeleton_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("nodes")) throw FormatError("skeleton: missing nodes");
  Skeleton s;
  for (const auto& n : j.at("nodes")) s.nodes.push_back(vec_from(n, "skeleton node"));
  try {
    if (j.contains("assignment")) s.assignment = j.at("assignment").get<std::vector<std::size_t>>();
    if (j.contains("clusters")) s.cluster_of_node = j.at("clusters").get<std::vector<int>>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError("skeleton: bad assignment or clusters");
  }
  for (const auto a : s.assignment) {
    if (a >= s.nodes.size()) throw FormatError("skeleton: assignment refers to a missing node");
  }
  if (s.cluster_of_node.empty()) s.cluster_of_node.assign(s.nodes.size(), 0);
  if (s.cluster_of_node.size() != s.nodes.size()) throw FormatError("skeleton: clusters length differs from nodes");
  return s;
}

namespace {

const char* kind_name(StructureKind k) {
  switch (k) {
    case StructureKind::Segment: return "segment";
    case StructureKind::Arc: return "arc";
    case StructureKind::Plane: return "plane";
    case StructureKind::BoxShell: return "box_shell";
    case StructureKind::Ridge: return "ridge";
  }
  return "segment";
}

StructureKind kind_from(const std::string& s) {
  if (s == "segment") return StructureKind::Segment;
  if (s == "arc") return StructureKind::Arc;
  if (s == "plane") return StructureKind::Plane;
  if (s == "box_shell") return StructureKind::BoxShell;
  if (s == "ridge") return StructureKind::Ridge;
  throw ConfigError("unknown structure kind '" + s + "'");
}

Json structure_json(const Structure& s) {
  Json j{{"kind", kind_name(s.kind)}};
  switch (s.kind) {
    case StructureKind::Segment:
      j["a"] = vec_json(s.a);
      j["b"] = vec_json(s.b);
      break;
    case StructureKind::Arc:
      j["center"] = vec_json(s.center);
      j["radius"] = s.radius;
      j["normal"] = vec_json(s.normal);
      j["start_angle"] = s.start_angle;
      j["sweep"] = s.sweep;
      break;
    case StructureKind::Ridge:
      j["fold_position"] = s.fold_position;
      j["fold_height"] = s.fold_height;
      j["fold_width"] = s.fold_width;
      j["detail_band"] = s.detail_band;
      j["detail_boost"] = s.detail_boost;
      [[fallthrough]];
    case StructureKind::Plane:
      j["origin"] = vec_json(s.origin);
      j["u"] = vec_json(s.u);
      j["v"] = vec_json(s.v);
      break;
    case StructureKind::BoxShell:
      j["center"] = vec_json(s.center);
      j["half_extents"] = vec_json(s.half_extents);
      break;
  }
  j["density"] = s.density;
  j["along_scale"] = s.along_scale;
  j["anisotropy"] = s.anisotropy;
  j["opacity_min"] = s.opacity_min;
  j["opacity_max"] = s.opacity_max;
  j["dash_on"] = s.dash_on;
  j["dash_off"] = s.dash_off;
  j["dash_jitter"] = s.dash_jitter;
  j["joint_spacing"] = s.joint_spacing;
  j["spokes"] = s.spokes;
  j["spoke_offset"] = s.spoke_offset;
  j["floater_fraction"] = s.floater_fraction;
  j["floater_scale"] = s.floater_scale;
  j["floater_offset"] = s.floater_offset;
  return j;
}

Structure structure_from(const Json& j) {
  const Overlay o(j, "structure",
                  {"kind", "a", "b", "center", "radius", "normal", "start_angle", "sweep", "origin", "u", "v",
                   "half_extents", "fold_position", "fold_height", "fold_width", "detail_band", "detail_boost",
                   "density", "along_scale", "anisotropy", "opacity_min", "opacity_max", "dash_on", "dash_off", "dash_jitter",
                   "joint_spacing", "spokes", "spoke_offset", "floater_fraction", "floater_scale", "floater_offset"});
  Structure s;
  std::string kind = "segment";
  o.get("kind", kind);
  s.kind = kind_from(kind);
  const auto vec = [&j](const char* key, Vec3& out) {
    if (j.contains(key)) out = vec_from(j.at(key), key);
  };
  vec("a", s.a);
  vec("b", s.b);
  vec("center", s.center);
  vec("normal", s.normal);
  vec("origin", s.origin);
  vec("u", s.u);
  vec("v", s.v);
  vec("half_extents", s.half_extents);
  o.get("radius", s.radius);
  o.get("start_angle", s.start_angle);
  o.get("sweep", s.sweep);
  o.get("fold_position", s.fold_position);
  o.get("fold_height", s.fold_height);
  o.get("fold_width", s.fold_width);
  o.get("detail_band", s.detail_band);
  o.get("detail_boost", s.detail_boost);
  o.get("density", s.density);
  o.get("along_scale", s.along_scale);
  o.get("anisotropy", s.anisotropy);
  o.get("opacity_min", s.opacity_min);
  o.get("opacity_max", s.opacity_max);
  o.get("dash_on", s.dash_on);
  o.get("dash_off", s.dash_off);
  o.get("dash_jitter", s.dash_jitter);
  o.get("joint_spacing", s.joint_spacing);
  o.get("spokes", s.spokes);
  o.get("spoke_offset", s.spoke_offset);
  o.get("floater_fraction", s.floater_fraction);
  o.get("floater_scale", s.floater_scale);
  o.get("floater_offset", s.floater_offset);
  return s;
}

Json bools_json(const std::vector<bool>& v) {
  Json j = Json::array();
  for (const bool b : v) j.push_back(b ? 1 : 0);
  return j;
}

std::vector<bool> bools_from(const Json& j, const char* key) {
  std::vector<bool> out;
  if (!j.contains(key)) return out;
  for (const auto& x : j.at(key)) {
    if (!x.is_number_integer()) throw FormatError(std::string("ground truth: ") + key + " must hold 0/1 values");
    out.push_back(x.get<int>() != 0);
  }
  return out;
}

}  // namespace

Json to_json(const SceneSpec& s) {
  Json structures = Json::array();
  for (const auto& st : s.structures) structures.push_back(structure_json(st));
  return Json{{"structures", structures},
              {"noise_sigma", s.noise_sigma},
              {"seed", s.seed},
              {"sh_degree", s.sh_degree},
              {"sample_spacing", s.sample_spacing}};
}

SceneSpec scene_spec_from_json(const Json& j) {
  const Overlay o(j, "scene spec", {"structures", "noise_sigma", "seed", "sh_degree", "sample_spacing"});
  SceneSpec s;
  if (!j.contains("structures") || !j.at("structures").is_array())
    throw ConfigError("scene spec: 'structures' must be an array");
  for (const auto& st : j.at("structures")) s.structures.push_back(structure_from(st));
  o.get("noise_sigma", s.noise_sigma);
  o.get("seed", s.seed);
  o.get("sh_degree", s.sh_degree);
  o.get("sample_spacing", s.sample_spacing);
  s.validate();
  return s;
}

Json to_json(const GroundTruth& gt) {
  Json lines = Json::array();
  for (const auto& line : gt.skeleton_polylines) {
    Json l = Json::array();
    for (const auto& p : line) l.push_back(vec_json(p));
    lines.push_back(l);
  }
  Json samples = Json::array();
  for (const auto& p : gt.structure_samples) samples.push_back(vec_json(p));
  return Json{{"transform", to_json(gt.transform)},
              {"skeleton_polylines", lines},
              {"structure_samples", samples},
              {"overlap_a", bools_json(gt.overlap_a)},
              {"overlap_b", bools_json(gt.overlap_b)},
              {"detail_a", bools_json(gt.detail_a)},
              {"detail_b", bools_json(gt.detail_b)},
              {"source_a", gt.source_a},
              {"source_b", gt.source_b}};
}

GroundTruth ground_truth_from_json(const Json& j) {
  if (!j.is_object()) throw FormatError("ground truth: expected a JSON object");
  GroundTruth gt;
  if (j.contains("transform")) gt.transform = transform_from_json(j.at("transform"));
  if (j.contains("skeleton_polylines")) {
    for (const auto& l : j.at("skeleton_polylines")) {
      Polyline line;
      for (const auto& p : l) line.push_back(vec_from(p, "polyline vertex"));
      gt.skeleton_polylines.push_back(std::move(line));
    }
  }
  if (j.contains("structure_samples")) {
    for (const auto& p : j.at("structure_samples")) gt.structure_samples.push_back(vec_from(p, "structure sample"));
  }
  gt.overlap_a = bools_from(j, "overlap_a");
  gt.overlap_b = bools_from(j, "overlap_b");
  gt.detail_a = bools_from(j, "detail_a");
  gt.detail_b = bools_from(j, "detail_b");
  try {
    if (j.contains("source_a")) gt.source_a = j.at("source_a").get<std::vector<std::size_t>>();
    if (j.contains("source_b")) gt.source_b = j.at("source_b").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception&) {
    throw FormatError("ground truth: bad source indices");
  }
  return gt;
}

Json to_json(const SkeletonMetrics& m) {
  Json j{{"curv_dev_pct", m.curv_dev_pct}, {"connectivity", m.connectivity}};
  if (m.hausdorff) j["hausdorff_m"] = *m.hausdorff;
  return j;
}

Json to_json(const RegistrationErrors& e) { return Json{{"rre_deg", e.rre_deg}, {"rte_m", e.rte_m}, {"rse", e.rse}}; }

Json to_json(const Scores& s) {
  return Json{{"s_ske", s.s_ske}, {"s_deta", s.s_deta}, {"s_cen", s.s_cen}, {"s_tot", s.s_tot}};
}

Json to_json(const FusionReport& r, bool verbose) {
  Json j{{"kept_from_a", r.kept_from_a},
         {"kept_from_b", r.kept_from_b},
         {"pairs", r.pairs.size()},
         {"dropped", r.dropped},
         {"eps_skel", r.eps_skel},
         {"eps_overlap", r.eps_overlap},
         {"detail_min", r.detail_min},
         {"detail_max", r.detail_max},
         {"merged_skeleton_nodes", r.merged_skeleton.size()}};
  if (verbose) {
    Json table = Json::array();
    for (const auto& p : r.pairs) {
      table.push_back(Json{{"a", p.index_a},
                           {"b", p.index_b},
                           {"score_a", to_json(p.score_a)},
                           {"score_b", to_json(p.score_b)},
                           {"kept", p.kept_a ? "a" : "b"}});
    }
    j["pair_scores"] = table;
  }
  return j;
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void write_json_file(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace gsfuse
