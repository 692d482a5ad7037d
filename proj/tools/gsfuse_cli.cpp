// gsfuse: command-line front end for synth, skeletonize, features, register, fuse and eval.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <numbers>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gsfuse/error.hpp"
#include "gsfuse/json_io.hpp"
#include "gsfuse/parallel.hpp"
#include "gsfuse/pipeline.hpp"
#include "gsfuse/ply_io.hpp"
#include "gsfuse/random.hpp"

namespace fs = std::filesystem;
using namespace gsfuse;

namespace {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kIo = 2,
  kValidation = 3,
  kDegenerate = 4,
  kRegistrationFailure = 5,
};

/// Flags that override config-file values after the file has been applied.
class Overrides {
 public:
  template <class T, class Apply>
  void add(CLI::App* app, const std::string& name, const std::string& help, Apply apply) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, help);
    items_.push_back([opt, value, apply](PipelineConfig& c) {
      if (opt->count() > 0) apply(c, *value);
    });
  }
  void add_flag(CLI::App* app, const std::string& name, const std::string& help,
                std::function<void(PipelineConfig&)> apply) {
    CLI::Option* opt = app->add_flag(name, help);
    items_.push_back([opt, apply](PipelineConfig& c) {
      if (opt->count() > 0) apply(c);
    });
  }
  void apply(PipelineConfig& c) const {
    for (const auto& f : items_) f(c);
  }

 private:
  std::vector<std::function<void(PipelineConfig&)>> items_;
};

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int threads = -1;
  std::string report_path;
  bool no_timing = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON config file; flags override its values");
  app->add_option("--seed", c.seed, "Seed for RANSAC sampling and scene generation");
  app->add_option("--threads", c.threads, "Worker thread cap (0 = all cores)")->check(CLI::NonNegativeNumber);
  app->add_option("--report", c.report_path, "Write the JSON report here instead of stdout");
  app->add_flag("--no-timing", c.no_timing, "Omit wall-clock fields from the report");
}

void add_skeleton_flags(CLI::App* app, Overrides& o) {
  o.add<double>(app, "--dbscan-eps", "DBSCAN radius (m)", [](PipelineConfig& c, double v) { c.skeleton.dbscan_eps = v; });
  o.add<int>(app, "--min-pts", "DBSCAN minPts", [](PipelineConfig& c, int v) { c.skeleton.dbscan_min_pts = v; });
  o.add<double>(app, "--lambda", "Curvature weight", [](PipelineConfig& c, double v) { c.skeleton.lambda = v; });
  o.add<double>(app, "--step-size", "Max node step (m)", [](PipelineConfig& c, double v) { c.skeleton.step_size = v; });
  o.add<double>(app, "--conv-tol", "Convergence tolerance (m)",
                [](PipelineConfig& c, double v) { c.skeleton.conv_tol = v; });
  o.add<double>(app, "--merge-dist", "Node merge distance (m)",
                [](PipelineConfig& c, double v) { c.skeleton.merge_dist = v; });
  o.add<int>(app, "--max-iters", "Refinement iteration cap", [](PipelineConfig& c, int v) { c.skeleton.max_iters = v; });
  o.add<int>(app, "--laplacian-k", "Neighbours in the node Laplacian",
             [](PipelineConfig& c, int v) { c.skeleton.laplacian_k = v; });
  o.add<double>(app, "--connectivity-eta", "Valid MST edge factor",
                [](PipelineConfig& c, double v) { c.skeleton.connectivity_eta = v; });
}

void add_conv_flags(CLI::App* app, Overrides& o) {
  o.add<int>(app, "--neighbors", "Neighbourhood size k", [](PipelineConfig& c, int v) { c.conv.num_neighbors = v; });
  o.add<double>(app, "--mahalanobis-radius", "Neighbourhood cut-off (Mahalanobis units)",
                [](PipelineConfig& c, double v) { c.conv.mahalanobis_radius = v; });
  o.add<int>(app, "--kernel-count", "Kernel points M", [](PipelineConfig& c, int v) { c.conv.kernel_count = v; });
  o.add<double>(app, "--kernel-radius", "Kernel sphere radius (m)",
                [](PipelineConfig& c, double v) { c.conv.kernel_radius = v; });
  o.add<std::vector<int>>(app, "--layer-dims", "Output dimension of every layer, e.g. 16,16",
                          [](PipelineConfig& c, const std::vector<int>& v) { c.conv.layer_dims = v; });
  o.add<std::uint64_t>(app, "--weight-seed", "Seed of the convolution weights",
                       [](PipelineConfig& c, std::uint64_t v) { c.conv.weight_seed = v; });
  o.add<std::string>(app, "--kernel-frame", "world or primitive", [](PipelineConfig& c, const std::string& v) {
    if (v == "world") {
      c.conv.kernel_frame = KernelFrame::World;
    } else if (v == "primitive") {
      c.conv.kernel_frame = KernelFrame::Primitive;
    } else {
      throw ConfigError("--kernel-frame must be 'world' or 'primitive'");
    }
  });
  o.add_flag(app, "--concat-detail-layers", "Detail descriptor = [layer 1, layer 2]",
             [](PipelineConfig& c) { c.conv.concat_detail_layers = true; });
}

void add_registration_flags(CLI::App* app, Overrides& o) {
  o.add<double>(app, "--ratio-test", "Match ratio threshold",
                [](PipelineConfig& c, double v) { c.registration.match_ratio_test = v; });
  o.add<int>(app, "--ransac-iters", "RANSAC iterations",
             [](PipelineConfig& c, int v) { c.registration.ransac_iters = v; });
  o.add<double>(app, "--inlier-tol", "Inlier distance (m)",
                [](PipelineConfig& c, double v) { c.registration.inlier_tol = v; });
  o.add<int>(app, "--min-inliers", "Minimum inliers", [](PipelineConfig& c, int v) { c.registration.min_inliers = v; });
}

void add_fusion_flags(CLI::App* app, Overrides& o) {
  o.add<double>(app, "--eps-skel", "Skeleton merge distance (m)",
                [](PipelineConfig& c, double v) { c.fusion.eps_skel = v; });
  o.add<double>(app, "--eps-overlap", "Overlap pair distance (m)",
                [](PipelineConfig& c, double v) { c.fusion.eps_overlap = v; });
  o.add<double>(app, "--delta", "Skeleton score falloff (1/m)", [](PipelineConfig& c, double v) { c.fusion.delta = v; });
  o.add<double>(app, "--alpha", "Skeleton score weight", [](PipelineConfig& c, double v) { c.fusion.alpha = v; });
  o.add<double>(app, "--beta", "Detail score weight", [](PipelineConfig& c, double v) { c.fusion.beta = v; });
  o.add<double>(app, "--gamma", "Centre score weight", [](PipelineConfig& c, double v) { c.fusion.gamma = v; });
  o.add<double>(app, "--tau", "Keep-A threshold", [](PipelineConfig& c, double v) { c.fusion.tau = v; });
  o.add_flag(app, "--compat-gamma-typo", "Weight the skeleton score by gamma instead of the centre score",
             [](PipelineConfig& c) { c.fusion.gamma_on_skeleton = true; });
}

void add_eval_flags(CLI::App* app, Overrides& o) {
  o.add<double>(app, "--coverage-eps", "Coverage radius (m)",
                [](PipelineConfig& c, double v) { c.eval.coverage_eps = v; });
  o.add<double>(app, "--redundancy-eps", "Redundancy radius (m)",
                [](PipelineConfig& c, double v) { c.eval.redundancy_eps = v; });
}

PipelineConfig resolve_config(const Common& common, const Overrides& overrides) {
  PipelineConfig cfg;
  if (!common.config_path.empty()) merge_json(read_json_file(common.config_path), cfg);
  overrides.apply(cfg);
  if (common.seed) cfg.registration.seed = *common.seed;
  if (common.threads >= 0) cfg.threads = common.threads;
  cfg.validate();
  set_thread_limit(static_cast<unsigned>(cfg.threads));
  return cfg;
}

void emit_report(const Json& report, const Common& common) {
  if (common.report_path.empty()) {
    std::cout << report.dump(2) << '\n';
  } else {
    write_json_file(report, common.report_path);
  }
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Vec3 parse_vec3(const std::vector<double>& v, const char* what) {
  if (v.size() != 3) throw ConfigError(std::string(what) + " expects three comma-separated numbers");
  return Vec3(v[0], v[1], v[2]);
}

/// "0.5:4,0.7:6,1.0:8" -> {(0.5, 4), (0.7, 6), (1.0, 8)}
std::vector<std::pair<double, int>> parse_sweep(const std::string& text) {
  std::vector<std::pair<double, int>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("--sweep-dbscan entries must look like eps:minPts");
    try {
      const double eps = std::stod(item.substr(0, colon));
      const int min_pts = std::stoi(item.substr(colon + 1));
      out.emplace_back(eps, min_pts);
    } catch (const std::exception&) {
      throw ConfigError("--sweep-dbscan: cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("--sweep-dbscan: no parameter pairs given");
  return out;
}

/// A transform file may be a bare transform or a ground-truth sidecar holding one.
SimilarityTransform read_transform(const std::string& path) {
  const Json j = read_json_file(path);
  if (j.is_object() && j.contains("transform")) return transform_from_json(j.at("transform"));
  return transform_from_json(j);
}

// ---------------------------------------------------------------------------------------------

struct SynthArgs {
  std::string preset = "registration";
  std::string spec_path;
  std::string out_dir = ".";
  bool pair = false;
  bool planted = false;
  bool random_transform = false;
  double overlap = 0.5;
  double rotation_deg = 0.0;
  std::vector<double> axis{0.0, 0.0, 1.0};
  std::vector<double> translation{0.0, 0.0, 0.0};
  double scale = 1.0;
  double noise = 0.0;
};

int cmd_synth(const SynthArgs& args, const Common& common) {
  SceneSpec spec;
  const std::uint64_t seed = common.seed.value_or(1);
  if (!args.spec_path.empty()) {
    spec = scene_spec_from_json(read_json_file(args.spec_path));
    if (common.seed) spec.seed = seed;
  } else {
    spec = preset_scene(args.preset, seed);
  }
  if (common.threads >= 0) set_thread_limit(static_cast<unsigned>(common.threads));
  fs::create_directories(args.out_dir);
  const fs::path dir(args.out_dir);

  const GeneratedScene scene = generate(spec);
  save_ply(scene.model, dir / "scene.ply");
  GroundTruth scene_gt;
  scene_gt.skeleton_polylines = scene.skeleton_polylines;
  scene_gt.structure_samples = scene.structure_samples;
  scene_gt.detail_a = scene.detail_labels;
  scene_gt.source_a.resize(scene.model.size());
  std::iota(scene_gt.source_a.begin(), scene_gt.source_a.end(), std::size_t{0});
  write_json_file(to_json(scene_gt), dir / "scene_gt.json");
  write_json_file(to_json(spec), dir / "spec.json");

  Json report{{"command", "synth"}, {"spec", to_json(spec)}, {"scene_primitives", scene.model.size()}};
  if (args.pair || args.planted) {
    SplitOptions opts;
    opts.overlap_fraction = args.overlap;
    opts.noise_sigma = args.noise;
    opts.seed = seed;
    if (args.random_transform) {
      Rng rng(seed ^ 0x5eedULL);
      const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
      const double angle = rng.uniform(0.0, 30.0) * std::numbers::pi / 180.0;
      const Vec3 t(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
      opts.transform = SimilarityTransform::from_axis_angle(axis, angle, t, rng.uniform(0.9, 1.1));
    } else {
      const Vec3 axis = parse_vec3(args.axis, "--axis");
      if (!(axis.norm() > 0.0)) throw ConfigError("--axis must be non-zero");
      opts.transform = SimilarityTransform::from_axis_angle(axis.normalized(), args.rotation_deg * std::numbers::pi / 180.0,
                                                            parse_vec3(args.translation, "--translation"), args.scale);
    }
    const SubmapPair pair = args.planted ? planted_detail_pair(spec, opts) : split_pair(scene, opts);
    save_ply(pair.a, dir / "a.ply");
    save_ply(pair.b, dir / "b.ply");
    write_json_file(to_json(pair.gt), dir / "gt.json");
    write_json_file(to_json(pair.gt.transform), dir / "gt_transform.json");
    report["a_primitives"] = pair.a.size();
    report["b_primitives"] = pair.b.size();
    report["gt_transform"] = to_json(pair.gt.transform);
  }
  emit_report(report, common);
  return kOk;
}

// ---------------------------------------------------------------------------------------------

struct SkeletonArgs {
  std::string input;
  std::string out;
  std::string baseline;
  std::string sweep;
  std::string reference;
};

Json metrics_json(const SkeletonRun& run, bool timing) {
  Json j = to_json(run.metrics);
  j["nodes"] = run.result.skeleton.size();
  j["iterations"] = run.result.trace.iterations;
  j["converged"] = run.result.trace.converged;
  j["final_energy"] = run.result.trace.final_energy;
  if (timing) j["time_s"] = run.time_s;
  return j;
}

int cmd_skeletonize(const SkeletonArgs& args, const Common& common, const Overrides& overrides) {
  const PipelineConfig cfg = resolve_config(common, overrides);
  bool euclidean = false;
  if (args.baseline == "l1") {
    euclidean = true;
  } else if (!args.baseline.empty()) {
    throw ConfigError("--baseline must be 'l1'");
  }
  const GaussianModel model = load_ply(args.input);
  std::optional<GroundTruth> ref;
  if (!args.reference.empty()) ref = ground_truth_from_json(read_json_file(args.reference));
  const std::vector<Polyline>* polylines = ref ? &ref->skeleton_polylines : nullptr;

  Json report{{"command", "skeletonize"}, {"input", args.input}, {"config", to_json(cfg)}};
  if (!args.sweep.empty()) {
    Json params = Json::array();
    Json ga = Json::array(), l1 = Json::array();
    for (const auto& [eps, min_pts] : parse_sweep(args.sweep)) {
      SkeletonConfig sc = cfg.skeleton;
      sc.dbscan_eps = eps;
      sc.dbscan_min_pts = min_pts;
      // The merge distance follows eps unless it was pinned explicitly.
      sc.validate();
      params.push_back(Json{{"dbscan_eps", eps}, {"dbscan_min_pts", min_pts}});
      ga.push_back(metrics_json(run_skeleton(model, sc, false, polylines), !common.no_timing));
      l1.push_back(metrics_json(run_skeleton(model, sc, true, polylines), !common.no_timing));
    }
    report["sweep"] = Json{{"params", params}, {"rows", Json{{"GA-L1", ga}, {"L1", l1}}}};
  } else {
    const SkeletonRun run = run_skeleton(model, cfg.skeleton, euclidean, polylines);
    report["method"] = euclidean ? "L1" : "GA-L1";
    report["metrics"] = metrics_json(run, !common.no_timing);
    if (!args.out.empty()) write_json_file(to_json(run.result.skeleton), args.out);
  }
  emit_report(report, common);
  return kOk;
}

// ---------------------------------------------------------------------------------------------

struct FeatureArgs {
  std::string input;
  std::string out;
  std::string dump_bin;
};

int cmd_features(const FeatureArgs& args, const Common& common, const Overrides& overrides) {
  const PipelineConfig cfg = resolve_config(common, overrides);
  const GaussianModel model = load_ply(args.input);
  const auto t0 = std::chrono::steady_clock::now();
  const FeatureField field = extract_features(model, cfg.conv);
  const double elapsed = seconds_since(t0);
  if (!args.out.empty()) {
    write_json_file(Json{{"detail_scores", field.detail_score}, {"layer_dims", field.layer_dims()}}, args.out);
  }
  if (!args.dump_bin.empty()) dump_feature_binary(field, args.dump_bin);

  double lo = 0.0, hi = 0.0, mean = 0.0;
  if (field.size() > 0) {
    lo = *std::min_element(field.detail_score.begin(), field.detail_score.end());
    hi = *std::max_element(field.detail_score.begin(), field.detail_score.end());
    mean = std::accumulate(field.detail_score.begin(), field.detail_score.end(), 0.0) /
           static_cast<double>(field.size());
  }
  Json report{{"command", "features"},
              {"input", args.input},
              {"config", to_json(cfg)},
              {"primitives", field.size()},
              {"kernel_radius", field.kernel_radius},
              {"detail_score", Json{{"min", lo}, {"max", hi}, {"mean", mean}}}};
  if (!common.no_timing) report["time_s"] = elapsed;
  emit_report(report, common);
  return kOk;
}

// ---------------------------------------------------------------------------------------------

struct RegisterArgs {
  std::string a, b;
  std::string out;
  std::string gt;
};

int cmd_register(const RegisterArgs& args, const Common& common, const Overrides& overrides) {
  const PipelineConfig cfg = resolve_config(common, overrides);
  const GaussianModel a = load_ply(args.a);
  const GaussianModel b = load_ply(args.b);
  std::optional<SimilarityTransform> gt;
  if (!args.gt.empty()) gt = read_transform(args.gt);

  Json report{{"command", "register"}, {"inputs", {args.a, args.b}}, {"config", to_json(cfg)}};
  const auto t0 = std::chrono::steady_clock::now();
  RegistrationOutcome out;
  try {
    out = register_submaps(a, b, cfg.conv, cfg.registration, cfg.skeleton);
  } catch (const RegistrationError& e) {
    report["status"] = "failed";
    report["error"] = e.what();
    emit_report(report, common);
    std::cerr << "gsfuse register: " << e.what() << '\n';
    return kRegistrationFailure;
  }
  const double elapsed = seconds_since(t0);
  if (!args.out.empty()) write_json_file(to_json(out.transform), args.out);
  report["status"] = "ok";
  report["transform"] = to_json(out.transform);
  report["matches"] = out.match_count;
  report["inliers"] = out.inlier_count;
  report["skeleton_fallback"] = out.used_skeleton_fallback;
  if (gt) report["errors"] = to_json(registration_errors(out.transform, *gt));
  if (!common.no_timing) report["time_s"] = elapsed;
  emit_report(report, common);
  return kOk;
}

// ---------------------------------------------------------------------------------------------

struct FuseArgs {
  std::string a, b, transform;
  std::string out;
  std::string baseline;
  bool verbose = false;
};

int cmd_fuse(const FuseArgs& args, const Common& common, const Overrides& overrides) {
  const PipelineConfig cfg = resolve_config(common, overrides);
  bool center = false;
  if (args.baseline == "center-proximity") {
    center = true;
  } else if (!args.baseline.empty()) {
    throw ConfigError("--baseline must be 'center-proximity'");
  }
  const GaussianModel a = load_ply(args.a);
  const GaussianModel b = load_ply(args.b);
  const SimilarityTransform T = read_transform(args.transform);
  T.validate();

  const auto t0 = std::chrono::steady_clock::now();
  const FusionRun run = run_fusion(a, b, T, cfg, center);
  const double elapsed = seconds_since(t0);
  save_ply(run.fusion.model, args.out);

  const FusionReport& r = run.fusion.report;
  Json report{{"command", "fuse"},
              {"inputs", {args.a, args.b, args.transform}},
              {"config", to_json(cfg)},
              {"mode", center ? "center-proximity" : "skeleton-aware"},
              {"input_sizes", {a.size(), b.size()}},
              {"fused_primitives", run.fusion.model.size()},
              {"skeleton_nodes", {run.skeleton_a.size(), run.skeleton_b.size()}},
              {"report", to_json(r, args.verbose)}};
  if (!common.no_timing) report["time_s"] = elapsed;
  emit_report(report, common);
  return kOk;
}

// ---------------------------------------------------------------------------------------------

struct EvalArgs {
  std::string fused, gt;
  std::string a, b, transform;
};

int cmd_eval(const EvalArgs& args, const Common& common, const Overrides& overrides) {
  const PipelineConfig cfg = resolve_config(common, overrides);
  const GaussianModel fused = load_ply(args.fused);
  const GroundTruth gt = ground_truth_from_json(read_json_file(args.gt));

  std::optional<GaussianModel> a, b_reg;
  if (!args.a.empty() || !args.b.empty()) {
    if (args.a.empty() || args.b.empty()) throw ConfigError("--a and --b must be given together");
    a = load_ply(args.a);
    const SimilarityTransform T = args.transform.empty() ? gt.transform : read_transform(args.transform);
    b_reg = apply_transform(load_ply(args.b), T);
  }
  const EvalMetrics m = evaluate(fused, gt, a ? &*a : nullptr, b_reg ? &*b_reg : nullptr, cfg.eval);
  Json report{{"command", "eval"}, {"inputs", {args.fused, args.gt}}, {"config", to_json(cfg)}, {"metrics", to_json(m)}};
  emit_report(report, common);
  return kOk;
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return kIo;
  if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const ValidationError*>(&e)) return kValidation;
  if (dynamic_cast<const DegenerateInputError*>(&e)) return kDegenerate;
  if (dynamic_cast<const RegistrationError*>(&e)) return kRegistrationFailure;
  if (dynamic_cast<const ConfigError*>(&e)) return kUsage;
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return kIo;
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Register and fuse two 3D Gaussian Splatting sub-maps"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "gsfuse 0.1.0");

  Common common;
  Overrides overrides;

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic scene and optionally a sub-map pair");
  add_common(s, common);
  s->add_option("--preset", synth.preset, "curves | isotropic-blobs | ridge | registration | planted-ridge | large");
  s->add_option("--spec", synth.spec_path, "SceneSpec JSON (overrides --preset)");
  s->add_option("--out-dir", synth.out_dir, "Output directory");
  s->add_flag("--pair", synth.pair, "Also split into sub-maps a.ply / b.ply with gt.json");
  s->add_flag("--planted", synth.planted, "Split with the fold flattened in A (detail only in B)");
  s->add_flag("--random-transform", synth.random_transform, "Draw the B->A transform from the seed");
  s->add_option("--overlap", synth.overlap, "Shared fraction of primitives")->check(CLI::Range(0.0, 1.0));
  s->add_option("--rotation-deg", synth.rotation_deg, "Ground-truth rotation angle");
  s->add_option("--axis", synth.axis, "Rotation axis x,y,z")->delimiter(',');
  s->add_option("--translation", synth.translation, "Translation x,y,z")->delimiter(',');
  s->add_option("--scale", synth.scale, "Ground-truth scale");
  s->add_option("--noise", synth.noise, "Jitter of B's means (m)");

  SkeletonArgs skel;
  auto* k = app.add_subcommand("skeletonize", "Extract a skeleton and report its metrics");
  add_common(k, common);
  add_skeleton_flags(k, overrides);
  k->add_option("model", skel.input, "Input PLY")->required();
  k->add_option("--out", skel.out, "Skeleton JSON output");
  k->add_option("--baseline", skel.baseline, "l1 = covariance-blind baseline");
  k->add_option("--sweep-dbscan", skel.sweep, "Grid over eps:minPts pairs, e.g. 0.5:4,0.7:6,1.0:8");
  k->add_option("--reference", skel.reference, "Ground-truth JSON with skeleton polylines (adds Hausdorff)");

  FeatureArgs feat;
  auto* f = app.add_subcommand("features", "Compute per-primitive features and detail scores");
  add_common(f, common);
  add_conv_flags(f, overrides);
  f->add_option("model", feat.input, "Input PLY")->required();
  f->add_option("--out", feat.out, "Features JSON output");
  f->add_option("--dump-bin", feat.dump_bin, "Binary dump of every layer output");

  RegisterArgs reg;
  auto* r = app.add_subcommand("register", "Estimate the similarity transform mapping B into A");
  add_common(r, common);
  add_conv_flags(r, overrides);
  add_registration_flags(r, overrides);
  add_skeleton_flags(r, overrides);
  r->add_option("a", reg.a, "Sub-map A PLY")->required();
  r->add_option("b", reg.b, "Sub-map B PLY")->required();
  r->add_option("--out", reg.out, "Transform JSON output");
  r->add_option("--gt", reg.gt, "Ground-truth transform or sidecar JSON; adds RRE/RTE/RSE");

  FuseArgs fuse_args;
  auto* u = app.add_subcommand("fuse", "Fuse A and registered B into one model");
  add_common(u, common);
  add_skeleton_flags(u, overrides);
  add_conv_flags(u, overrides);
  add_fusion_flags(u, overrides);
  u->add_option("a", fuse_args.a, "Sub-map A PLY")->required();
  u->add_option("b", fuse_args.b, "Sub-map B PLY")->required();
  u->add_option("transform", fuse_args.transform, "Transform JSON mapping B into A")->required();
  u->add_option("--out", fuse_args.out, "Fused PLY output")->required();
  u->add_option("--baseline", fuse_args.baseline, "center-proximity = centre-distance selection only");
  u->add_flag("--verbose-report", fuse_args.verbose, "Include the per-pair score table");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Geometric fusion metrics against ground truth");
  add_common(e, common);
  add_eval_flags(e, overrides);
  e->add_option("fused", ev.fused, "Fused PLY")->required();
  e->add_option("gt", ev.gt, "Ground-truth sidecar JSON")->required();
  e->add_option("--a", ev.a, "Sub-map A PLY (enables redundancy and detail retention)");
  e->add_option("--b", ev.b, "Sub-map B PLY");
  e->add_option("--transform", ev.transform, "Transform used for fusion (defaults to the ground truth)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*s) return cmd_synth(synth, common);
    if (*k) return cmd_skeletonize(skel, common, overrides);
    if (*f) return cmd_features(feat, common, overrides);
    if (*r) return cmd_register(reg, common, overrides);
    if (*u) return cmd_fuse(fuse_args, common, overrides);
    if (*e) return cmd_eval(ev, common, overrides);
  } catch (const std::exception& ex) {
    std::cerr << "gsfuse: " << ex.what() << '\n';
    return exit_code_for(ex);
  }
  return kUsage;
}
