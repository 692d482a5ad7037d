// Acceptance suite: one PASS/FAIL line per criterion. Exit status is non-zero when any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "gsfuse/error.hpp"
#include "gsfuse/pipeline.hpp"
#include "gsfuse/ply_io.hpp"
#include "oracles.hpp"

using namespace gsfuse;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string ply_bytes(const GaussianModel& m) {
  std::ostringstream out;
  write_ply(m, out);
  return out.str();
}

// ---------------------------------------------------------------------------------------------
// 1. Oracle equivalence

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  std::vector<std::string> failures;
  const auto check = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };

  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const GaussianModel m = oracle::random_model(seed, 2000, 0, 2.0);
    const GaussianIndex index(m);
    const ConvConfig cfg;
    Rng rng(seed);

    bool knn = true, maha = true, weight = true;
    for (int t = 0; t < 100; ++t) {
      const std::size_t i = rng.below(m.size());
      knn = knn && neighborhood(index, i, cfg) == oracle::mahalanobis_knn(m, i, cfg.num_neighbors, cfg.mahalanobis_radius);
      const std::size_t j = rng.below(m.size());
      const double want = std::sqrt(oracle::mahalanobis_sq(m[i], m[j].mean));
      maha = maha && std::abs(mahalanobis_dist(m[i], m[j].mean) - want) <= 1e-12 * std::max(1.0, want);
      const Vec3 x(rng.normal(0, 0.05), rng.normal(0, 0.05), rng.normal(0, 0.05));
      const Vec3 d = m[j].mean - m[i].mean - x;
      const double w = std::exp(-0.5 * d.dot(oracle::cofactor_inverse(oracle::covariance(m[i])) * d));
      weight = weight && std::abs(kernel_weight(m[i], m[j].mean, x) - w) <= 1e-12;
    }
    check(knn, "mahalanobis knn");
    check(maha, "mahalanobis distance");
    check(weight, "kernel weight");

    // Convolution against a quadruple loop on a 300-primitive subset.
    const GaussianModel small = oracle::random_model(seed + 10, 300, 0, 0.8);
    const GaussianIndex sidx(small);
    const KernelLayout layout = KernelLayout::fibonacci(default_kernel_radius(small), cfg.kernel_count);
    const ConvWeights wts = make_conv_weights(4, 8, cfg.kernel_count, seed);
    const FeatureMatrix fin = input_features(sidx, layout.radius);
    const FeatureMatrix got = conv_layer(sidx, fin, layout, wts, cfg);
    FeatureMatrix want = FeatureMatrix::Zero(got.rows(), got.cols());
    for (std::size_t i = 0; i < small.size(); ++i) {
      const Mat3 P = oracle::cofactor_inverse(oracle::covariance(small[i]));
      const Mat3 R = oracle::quat_to_matrix(small[i].rotation.w(), small[i].rotation.x(), small[i].rotation.y(),
                                            small[i].rotation.z());
      for (std::size_t j : oracle::mahalanobis_knn(small, i, cfg.num_neighbors, cfg.mahalanobis_radius)) {
        for (std::size_t k = 0; k < layout.points.size(); ++k) {
          const Vec3 d = small[j].mean - small[i].mean - R * layout.points[k];
          const double wk = std::exp(-0.5 * d.dot(P * d));
          for (int o = 0; o < wts.out_dim; ++o)
            for (int c = 0; c < wts.in_dim; ++c)
              want(static_cast<Eigen::Index>(i), o) += wk * wts.per_kernel[k](o, c) * fin(static_cast<Eigen::Index>(j), c);
        }
      }
    }
    check((got - want).cwiseAbs().maxCoeff() <= 1e-8, "convolution");

    // DBSCAN labels and G2D on a clustered scene.
    const GaussianModel scene = generate(preset_scene(seed % 2 ? "curves" : "registration", seed)).model;
    const GaussianModel sub(std::vector<GaussianPrimitive>(
        scene.primitives().begin(), scene.primitives().begin() + std::min<std::ptrdiff_t>(2000, scene.size())));
    const auto pts = sub.means();
    for (const auto& [eps, mp] : std::vector<std::pair<double, int>>{{0.3, 4}, {0.5, 4}, {0.7, 6}}) {
      check(oracle::same_clustering(dbscan_labels(pts, eps, mp), oracle::dbscan(pts, eps, mp), pts, eps, mp),
            fmt("dbscan eps %.1f", eps));
    }
    const SkeletonConfig sc;
    const Skeleton sk = extract_skeleton(sub, sc).skeleton;
    std::vector<double> sums(sk.size(), 0.0);
    for (std::size_t i = 0; i < sub.size(); ++i) sums[sk.assignment[i]] += oracle::density(sub[i], sk.nodes[sk.assignment[i]]);
    const double g2d_want = *std::min_element(sums.begin(), sums.end());
    check(std::abs(g2d_distance(sub, sk) - g2d_want) <= 1e-12 * std::max(1.0, g2d_want), "g2d");
    const double e_want = oracle::energy(sk.nodes, sk.assignment, sub, sc.lambda, sc.laplacian_k);
    check(std::abs(energy(sk, sub, sc) - e_want) <= 1e-12 * std::max(1.0, std::abs(e_want)), "energy");

    // Mutual-NN overlap pairs.
    const GaussianModel b = oracle::random_model(seed + 20, 2000, 0, 2.0);
    for (double eps : {0.05, 0.1, 0.3})
      check(overlap_pairs(m, b, eps) == oracle::mutual_nn(m.means(), b.means(), eps), fmt("overlap pairs %.2f", eps));
  }
  const double t = seconds_since(t0);
  check(t < 60.0, "runtime");
  std::string detail = fmt("%.1fs", t);
  for (const auto& f : failures) detail += "; failed: " + f;
  return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------------------------
// 2. Energy monotonicity

Outcome energy_monotonicity() {
  const auto t0 = Clock::now();
  int ok = 0, max_iters = 0;
  const char* presets[] = {"curves", "registration", "ridge", "isotropic-blobs"};
  for (int s = 0; s < 20; ++s) {
    const GaussianModel m = generate(preset_scene(presets[s % 4], 10 + static_cast<std::uint64_t>(s))).model;
    const SkeletonConfig cfg;
    const RefineTrace tr = extract_skeleton(m, cfg).trace;
    bool mono = true;
    for (std::size_t i = 1; i < tr.energy.size(); ++i) mono = mono && tr.energy[i] <= tr.energy[i - 1];
    ok += mono && tr.converged && tr.iterations <= 500;
    max_iters = std::max(max_iters, tr.iterations);
  }
  const double t = seconds_since(t0);
  return {ok == 20 && t < 120.0, fmt("%d/20 monotone and converged, max %d iterations, %.1fs", ok, max_iters, t)};
}

// ---------------------------------------------------------------------------------------------
// 3. GA-L1 versus the covariance-blind L1 baseline

Outcome skeleton_trend() {
  const auto t0 = Clock::now();
  const std::pair<double, int> triples[] = {{0.5, 4}, {0.7, 6}, {1.0, 8}};
  int cells = 0, good = 0;
  std::string worst;
  for (std::uint64_t seed = 100; seed < 105; ++seed) {
    const GeneratedScene scene = generate(preset_scene("curves", seed));
    for (const auto& [eps, mp] : triples) {
      SkeletonConfig cfg;
      cfg.dbscan_eps = eps;
      cfg.dbscan_min_pts = mp;
      const SkeletonRun ga = run_skeleton(scene.model, cfg, false);
      const SkeletonRun l1 = run_skeleton(scene.model, cfg, true);
      ++cells;
      const bool cell = ga.metrics.curv_dev_pct < l1.metrics.curv_dev_pct &&
                        ga.metrics.connectivity >= l1.metrics.connectivity;
      good += cell;
      if (!cell)
        worst = fmt("seed %llu eps %.1f: curv %.2f vs %.2f, conn %.3f vs %.3f", static_cast<unsigned long long>(seed),
                    eps, ga.metrics.curv_dev_pct, l1.metrics.curv_dev_pct, ga.metrics.connectivity,
                    l1.metrics.connectivity);
    }
  }
  std::string d = fmt("%d/%d cells, %.1fs", good, cells, seconds_since(t0));
  if (!worst.empty()) d += "; " + worst;
  return {good == cells, d};
}

// ---------------------------------------------------------------------------------------------
// 4. Registration recovery

Outcome registration_recovery() {
  const auto t0 = Clock::now();
  int pass = 0;
  double worst_rre = 0.0, worst_rte = 0.0, worst_rse = 0.0;
  for (int s = 0; s < 20; ++s) {
    Rng rng(1000 + static_cast<std::uint64_t>(s));
    const Vec3 axis = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    const double angle = rng.uniform(0, 30) * std::numbers::pi / 180.0;
    SplitOptions opts;
    opts.transform = SimilarityTransform::from_axis_angle(
        axis, angle, Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)), rng.uniform(0.9, 1.1));
    opts.noise_sigma = 0.01;
    opts.seed = static_cast<std::uint64_t>(s);
    opts.overlap_fraction = 0.5;
    const SubmapPair pair = split_pair(generate(preset_scene("registration", 200 + static_cast<std::uint64_t>(s))), opts);
    try {
      const RegistrationOutcome out =
          register_submaps(pair.a, pair.b, ConvConfig{}, RegistrationConfig{}, SkeletonConfig{});
      const RegistrationErrors e = registration_errors(out.transform, opts.transform);
      pass += e.rre_deg < 1.0 && e.rte_m < 0.05 && e.rse < 0.02;
      worst_rre = std::max(worst_rre, e.rre_deg);
      worst_rte = std::max(worst_rte, e.rte_m);
      worst_rse = std::max(worst_rse, e.rse);
    } catch (const RegistrationError&) {
    }
  }
  const double t = seconds_since(t0);
  return {pass >= 18 && t < 300.0,
          fmt("%d/20 within thresholds, worst RRE %.3f deg RTE %.4f m RSE %.4f, %.1fs", pass, worst_rre, worst_rte,
              worst_rse, t)};
}

// ---------------------------------------------------------------------------------------------
// 5. Exact recovery

Outcome exact_recovery() {
  Rng rng(55);
  double rre = 0.0, rte = 0.0, rse = 0.0;
  for (int t = 0; t < 100; ++t) {
    const SimilarityTransform T = SimilarityTransform::from_axis_angle(
        Vec3(rng.normal(), rng.normal(), rng.normal()).normalized(), rng.uniform(0, std::numbers::pi),
        Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)), rng.uniform(0.9, 1.1));
    std::vector<Vec3> src, dst;
    for (int i = 0; i < 30; ++i) {
      src.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      dst.push_back(T.apply(src.back()));
    }
    const RegistrationErrors e = registration_errors(umeyama_similarity(src, dst), T);
    rre = std::max(rre, e.rre_deg);
    rte = std::max(rte, e.rte_m);
    rse = std::max(rse, e.rse);
  }
  return {rre < 1e-9 && rte < 1e-12 && rse < 1e-12, fmt("max RRE %.2e deg RTE %.2e m RSE %.2e", rre, rte, rse)};
}

// ---------------------------------------------------------------------------------------------
// 6. Fusion accounting and determinism

Outcome fusion_accounting() {
  const auto t0 = Clock::now();
  int checks = 0, ok = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SplitOptions opts;
    opts.transform = SimilarityTransform::from_axis_angle(Vec3::UnitZ(), 0.2, Vec3(0.3, 0.1, 0), 1.02);
    opts.noise_sigma = 0.01;
    opts.seed = seed;
    const SubmapPair pair = split_pair(generate(preset_scene("registration", 40 + seed)), opts);
    for (bool baseline : {false, true}) {
      const FusionRun r = run_fusion(pair.a, pair.b, opts.transform, PipelineConfig{}, baseline);
      ++checks;
      ok += r.fusion.model.size() == pair.a.size() + pair.b.size() - r.fusion.report.pairs.size();
    }
    const FusionRun self = run_fusion(pair.a, pair.a, SimilarityTransform{}, PipelineConfig{}, false);
    ++checks;
    ok += self.fusion.model.size() == pair.a.size();
  }
  // Two complete runs (registration included) with the same seeds.
  SplitOptions opts;
  opts.transform = SimilarityTransform::from_axis_angle(Vec3(1, 1, 0).normalized(), 0.3, Vec3(0.2, -0.4, 0.1), 0.95);
  opts.noise_sigma = 0.01;
  opts.seed = 9;
  const SubmapPair pair = split_pair(generate(preset_scene("registration", 9)), opts);
  std::string bytes[2];
  for (auto& b : bytes) {
    const PipelineConfig cfg;
    const RegistrationOutcome reg = register_submaps(pair.a, pair.b, cfg.conv, cfg.registration, cfg.skeleton);
    b = ply_bytes(run_fusion(pair.a, pair.b, reg.transform, cfg, false).fusion.model);
  }
  ++checks;
  ok += bytes[0] == bytes[1];
  return {ok == checks, fmt("%d/%d accounting, self-fusion and byte-identity checks, %.1fs", ok, checks, seconds_since(t0))};
}

// ---------------------------------------------------------------------------------------------
// 7. Fusion quality against the centre-proximity baseline

Outcome fusion_quality() {
  const auto t0 = Clock::now();
  int wins = 0;
  double ret_ours = 0.0, ret_base = 0.0;
  for (int s = 0; s < 20; ++s) {
    Rng rng(5000 + static_cast<std::uint64_t>(s));
    SplitOptions opts;
    opts.transform = SimilarityTransform::from_axis_angle(Vec3(rng.normal(), rng.normal(), rng.normal()).normalized(),
                                                          rng.uniform(0, 0.5), Vec3(0.3, -0.2, 0.1), rng.uniform(0.9, 1.1));
    opts.noise_sigma = 0.01;
    opts.seed = static_cast<std::uint64_t>(s);
    opts.overlap_fraction = 0.5;
    opts.split_axis = Vec3::UnitX();
    const SubmapPair pair = planted_detail_pair(preset_scene("planted-ridge", 300 + static_cast<std::uint64_t>(s)), opts);
    const PipelineConfig cfg;
    const FusionRun ours = run_fusion(pair.a, pair.b, opts.transform, cfg, false);
    const FusionRun base = run_fusion(pair.a, pair.b, opts.transform, cfg, true);
    EvalConfig ec;
    ec.coverage_eps = 0.05;
    const EvalMetrics mo = evaluate(ours.fusion.model, pair.gt, &pair.a, &ours.b_registered, ec);
    const EvalMetrics mb = evaluate(base.fusion.model, pair.gt, &pair.a, &base.b_registered, ec);
    wins += mo.detail_retention.value_or(0.0) >= mb.detail_retention.value_or(0.0) && mo.coverage >= mb.coverage;
    ret_ours += mo.detail_retention.value_or(0.0) / 20.0;
    ret_base += mb.detail_retention.value_or(0.0) / 20.0;
  }
  return {wins >= 18, fmt("%d/20 trials at or above baseline, mean detail retention %.3f vs %.3f, %.1fs", wins, ret_ours,
                          ret_base, seconds_since(t0))};
}

// ---------------------------------------------------------------------------------------------
// 8. Equivariance suite

Outcome equivariance() {
  std::vector<std::string> failures;
  const auto check = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  const GaussianModel m = oracle::random_model(77, 600, 0, 0.9);
  Rng rng(8);
  for (int t = 0; t < 3; ++t) {
    const SimilarityTransform R = SimilarityTransform::from_axis_angle(
        Vec3(rng.normal(), rng.normal(), rng.normal()).normalized(), rng.uniform(0, std::numbers::pi),
        Vec3(rng.normal(), rng.normal(), rng.normal()));
    const GaussianModel rm = apply_transform(m, R);
    for (KernelFrame frame : {KernelFrame::World, KernelFrame::Primitive}) {
      ConvConfig cfg;
      cfg.kernel_frame = frame;
      const KernelLayout layout = KernelLayout::fibonacci(default_kernel_radius(m), cfg.kernel_count);
      const FeatureField a = extract_features(m, cfg, layout);
      const FeatureField b =
          extract_features(rm, cfg, frame == KernelFrame::World ? layout.rotated(R.rotation) : layout);
      double err = 0.0;
      for (std::size_t l = 0; l < a.layer_outputs.size(); ++l) {
        const double scale = std::max(1.0, a.layer_outputs[l].cwiseAbs().maxCoeff());
        err = std::max(err, (a.layer_outputs[l] - b.layer_outputs[l]).cwiseAbs().maxCoeff() / scale);
      }
      check(err <= 1e-9, "co-rotation");
    }
  }

  // Isotropic covariances reduce to Euclidean geometry.
  bool iso = true;
  for (int t = 0; t < 200; ++t) {
    GaussianPrimitive c;
    const double sigma = rng.uniform(0.05, 1.0);
    c.mean = Vec3(rng.normal(), rng.normal(), rng.normal());
    c.log_scale = Vec3::Constant(std::log(sigma));
    c.rotation = Eigen::Quaterniond(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
    const Vec3 q = c.mean + Vec3(rng.normal(), rng.normal(), rng.normal());
    iso = iso && std::abs(mahalanobis_dist(c, q) - (q - c.mean).norm() / sigma) <= 1e-12 * std::max(1.0, (q - c.mean).norm() / sigma);
    iso = iso && std::abs(kernel_weight(c, q, Vec3::Zero()) - std::exp(-(q - c.mean).squaredNorm() / (2 * sigma * sigma))) <= 1e-12;
  }
  check(iso, "isotropic reduction");

  // Linearity of one convolution layer.
  {
    const GaussianIndex index(m);
    const ConvConfig cfg;
    const KernelLayout layout = KernelLayout::fibonacci(default_kernel_radius(m), cfg.kernel_count);
    const ConvWeights w = make_conv_weights(4, 6, cfg.kernel_count, 3);
    FeatureMatrix f(static_cast<Eigen::Index>(m.size()), 4), g(static_cast<Eigen::Index>(m.size()), 4);
    for (Eigen::Index r = 0; r < f.rows(); ++r)
      for (int c = 0; c < 4; ++c) {
        f(r, c) = rng.normal();
        g(r, c) = rng.normal();
      }
    const FeatureMatrix lhs = conv_layer(index, 2.5 * f - g, layout, w, cfg);
    const FeatureMatrix rhs = 2.5 * conv_layer(index, f, layout, w, cfg) - conv_layer(index, g, layout, w, cfg);
    check((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, rhs.cwiseAbs().maxCoeff()), "conv linearity");
  }

  // Score ranges over real fusion runs.
  bool ranges = true;
  SplitOptions opts;
  opts.noise_sigma = 0.01;
  const SubmapPair pair = split_pair(generate(preset_scene("registration", 12)), opts);
  for (bool compat : {false, true}) {
    PipelineConfig cfg;
    cfg.fusion.gamma_on_skeleton = compat;
    const FusionRun r = run_fusion(pair.a, pair.b, opts.transform, cfg, false);
    const double top = cfg.fusion.alpha + cfg.fusion.beta + cfg.fusion.gamma;
    for (const auto& p : r.fusion.report.pairs) {
      for (const Scores& s : {p.score_a, p.score_b}) {
        for (double v : {s.s_ske, s.s_deta, s.s_cen}) ranges = ranges && v >= 0.0 && v <= 1.0;
        ranges = ranges && s.s_tot >= 0.0 && s.s_tot <= top + 1e-12;
      }
    }
  }
  check(ranges, "score ranges");

  std::string detail = failures.empty() ? "co-rotation, isotropic reduction, linearity and score ranges hold" : "";
  for (const auto& f : failures) detail += "failed: " + f + "; ";
  return {failures.empty(), detail};
}

// ---------------------------------------------------------------------------------------------
// 9. PLY round trips

Outcome ply_round_trip() {
  int ok = 0;
  for (int t = 0; t < 100; ++t) {
    const int degree = t % 2 ? 3 : 0;
    const GaussianModel m = oracle::random_model(9000 + static_cast<std::uint64_t>(t), 50 + static_cast<std::size_t>(t) * 7, degree, 5.0);
    const std::string first = ply_bytes(m);
    std::istringstream in(first);
    const GaussianModel loaded = read_ply(in);
    const std::string second = ply_bytes(loaded);
    std::istringstream in2(second);
    ok += second == first && read_ply(in2) == loaded && loaded.sh_degree() == degree;
  }
  return {ok == 100, fmt("%d/100 byte-exact round trips", ok)};
}

// ---------------------------------------------------------------------------------------------
// 10. Scale

Outcome scale() {
  const auto t0 = Clock::now();
  SplitOptions opts;
  opts.transform = SimilarityTransform::from_axis_angle(Vec3::UnitZ(), 0.3, Vec3(0.5, -0.2, 0.1), 1.05);
  opts.noise_sigma = 0.01;
  opts.seed = 3;
  const SubmapPair pair = split_pair(generate(preset_scene("large", 5)), opts);
  const std::size_t total = pair.a.size() + pair.b.size();
  const PipelineConfig cfg;
  const RegistrationOutcome reg = register_submaps(pair.a, pair.b, cfg.conv, cfg.registration, cfg.skeleton);
  const FusionRun fused = run_fusion(pair.a, pair.b, reg.transform, cfg, false);
  const RegistrationErrors e = registration_errors(reg.transform, opts.transform);
  const double t = seconds_since(t0);
  return {total >= 100000 && t < 600.0,
          fmt("%zu input primitives, %zu fused, RRE %.3f deg, %.1fs", total, fused.fusion.model.size(), e.rre_deg, t)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"oracle equivalence", oracle_equivalence},
      {"energy monotonicity", energy_monotonicity},
      {"skeleton trend vs L1", skeleton_trend},
      {"registration recovery", registration_recovery},
      {"exact recovery", exact_recovery},
      {"fusion accounting and determinism", fusion_accounting},
      {"fusion quality vs centre proximity", fusion_quality},
      {"equivariance suite", equivariance},
      {"PLY round trip", ply_round_trip},
      {"scale", scale},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu %-36s %s  (%s)\n", i + 1, criteria[i].first, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
