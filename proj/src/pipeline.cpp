#include "gsfuse/pipeline.hpp"

#include <array>
#include <bit>
#include <chrono>
#include <cstring>
#include <map>
#include <unordered_map>

#include "gsfuse/error.hpp"
#include "gsfuse/kdtree.hpp"

namespace gsfuse {

void EvalConfig::validate() const {
  if (!(coverage_eps > 0.0)) throw ConfigError("eval config: coverage_eps must be > 0");
  if (redundancy_eps && !(*redundancy_eps > 0.0)) throw ConfigError("eval config: redundancy_eps must be > 0");
}

void PipelineConfig::validate() const {
  skeleton.validate();
  conv.validate();
  registration.validate();
  fusion.validate();
  eval.validate();
  if (threads < 0) throw ConfigError("threads must be >= 0");
  for (const auto& p : inputs) {
    if (p.empty()) throw ConfigError("input paths must be non-empty");
  }
}

Json to_json(const PipelineConfig& c) {
  return Json{{"skeleton", to_json(c.skeleton)},
              {"conv", to_json(c.conv)},
              {"registration", to_json(c.registration)},
              {"fusion", to_json(c.fusion)},
              {"eval",
               Json{{"coverage_eps", c.eval.coverage_eps},
                    {"redundancy_eps", c.eval.redundancy_eps ? Json(*c.eval.redundancy_eps) : Json(nullptr)}}},
              {"threads", c.threads}};
}

void merge_json(const Json& j, PipelineConfig& c) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "skeleton") {
      merge_json(value, c.skeleton);
    } else if (key == "conv") {
      merge_json(value, c.conv);
    } else if (key == "registration") {
      merge_json(value, c.registration);
    } else if (key == "fusion") {
      merge_json(value, c.fusion);
    } else if (key == "eval") {
      if (!value.is_object()) throw ConfigError("eval config: expected a JSON object");
      for (const auto& [k, v] : value.items()) {
        if (k == "coverage_eps" && v.is_number()) {
          c.eval.coverage_eps = v.get<double>();
        } else if (k == "redundancy_eps" && (v.is_number() || v.is_null())) {
          c.eval.redundancy_eps = v.is_null() ? std::nullopt : std::optional<double>(v.get<double>());
        } else {
          throw ConfigError("eval config: bad key or value '" + k + "'");
        }
      }
    } else if (key == "threads" && value.is_number_integer()) {
      c.threads = value.get<int>();
    } else {
      throw ConfigError("config: unknown key or bad value '" + key + "'");
    }
  }
}

SkeletonRun run_skeleton(const GaussianModel& model, const SkeletonConfig& cfg, bool euclidean_baseline,
                         const std::vector<Polyline>* reference) {
  const auto t0 = std::chrono::steady_clock::now();
  SkeletonRun run;
  run.result = euclidean_baseline ? l1_baseline(model, cfg) : extract_skeleton(model, cfg);
  run.time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run.metrics = skeleton_metrics(run.result.skeleton, cfg, reference);
  return run;
}

FusionRun run_fusion(const GaussianModel& a, const GaussianModel& b, const SimilarityTransform& b_to_a,
                     const PipelineConfig& cfg, bool center_proximity_baseline) {
  FusionRun run;
  run.b_registered = apply_transform(b, b_to_a);
  run.skeleton_a = extract_skeleton(a, cfg.skeleton).skeleton;
  run.skeleton_b = extract_skeleton(run.b_registered, cfg.skeleton).skeleton;
  const FeatureField fa = extract_features(a, cfg.conv);
  const FeatureField fb = extract_features(run.b_registered, cfg.conv);
  const FusionConfig fcfg =
      center_proximity_baseline ? FusionConfig::center_proximity_baseline(cfg.fusion) : cfg.fusion;
  run.fusion = fuse(a, run.b_registered, run.skeleton_a, run.skeleton_b, fa, fb, fcfg, cfg.skeleton.merge_distance());
  return run;
}

double coverage(std::span<const Vec3> points, std::span<const Vec3> samples, double eps) {
  if (samples.empty()) return 1.0;
  if (points.empty()) return 0.0;
  const KdTree tree(points);
  std::size_t hit = 0;
  for (const auto& s : samples) {
    const Neighbor n = tree.nearest(s);
    if (n.dist_sq <= eps * eps) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(samples.size());
}

namespace {

using MeanKey = std::array<std::uint32_t, 3>;

MeanKey key_of(const Vec3& m) {
  MeanKey k;
  for (int i = 0; i < 3; ++i) k[i] = std::bit_cast<std::uint32_t>(static_cast<float>(m[i]));
  return k;
}

}  // namespace

std::vector<std::optional<Provenance>> trace_provenance(const GaussianModel& fused, const GaussianModel& a,
                                                        const GaussianModel& b_registered) {
  std::map<MeanKey, Provenance> index;
  // B first so that A wins when both inputs hold the same mean.
  for (std::size_t j = 0; j < b_registered.size(); ++j) index[key_of(b_registered[j].mean)] = {Owner::B, j};
  for (std::size_t i = 0; i < a.size(); ++i) index[key_of(a[i].mean)] = {Owner::A, i};
  std::vector<std::optional<Provenance>> out(fused.size());
  for (std::size_t k = 0; k < fused.size(); ++k) {
    const auto it = index.find(key_of(fused[k].mean));
    if (it != index.end()) out[k] = it->second;
  }
  return out;
}

EvalMetrics evaluate(const GaussianModel& fused, const GroundTruth& gt, const GaussianModel* a,
                     const GaussianModel* b_registered, const EvalConfig& cfg) {
  cfg.validate();
  EvalMetrics m;
  m.fused_count = fused.size();
  const std::vector<Vec3> means = fused.means();
  m.coverage = coverage(means, gt.structure_samples, cfg.coverage_eps);
  if (a == nullptr || b_registered == nullptr) return m;
  if (gt.source_a.size() != a->size() || gt.source_b.size() != b_registered->size()) {
    throw ValidationError("ground-truth labels do not match the input model sizes");
  }

  const auto prov = trace_provenance(fused, *a, *b_registered);
  std::vector<long long> source(fused.size(), -1);
  for (std::size_t k = 0; k < fused.size(); ++k) {
    if (!prov[k]) {
      ++m.untraced;
      continue;
    }
    source[k] = static_cast<long long>(prov[k]->owner == Owner::A ? gt.source_a[prov[k]->index]
                                                                  : gt.source_b[prov[k]->index]);
  }

  if (!fused.empty()) {
    const double eps = cfg.redundancy_eps.value_or(median_nn_spacing(*a));
    const KdTree tree(means);
    std::size_t redundant = 0;
    std::vector<std::size_t> near;
    for (std::size_t k = 0; k < fused.size(); ++k) {
      if (source[k] < 0) continue;
      tree.radius(means[k], eps, near);
      for (const auto j : near) {
        if (j != k && source[j] == source[k]) {
          ++redundant;
          break;
        }
      }
    }
    m.redundancy = static_cast<double>(redundant) / static_cast<double>(fused.size());
  }

  if (!gt.detail_a.empty() || !gt.detail_b.empty()) {
    std::vector<bool> kept_a(a->size(), false), kept_b(b_registered->size(), false);
    for (const auto& p : prov) {
      if (p) (p->owner == Owner::A ? kept_a : kept_b)[p->index] = true;
    }
    std::size_t total = 0, kept = 0;
    for (std::size_t i = 0; i < gt.detail_a.size() && i < a->size(); ++i) {
      if (!gt.detail_a[i]) continue;
      ++total;
      if (kept_a[i]) ++kept;
    }
    for (std::size_t j = 0; j < gt.detail_b.size() && j < b_registered->size(); ++j) {
      if (!gt.detail_b[j]) continue;
      ++total;
      if (kept_b[j]) ++kept;
    }
    if (total > 0) m.detail_retention = static_cast<double>(kept) / static_cast<double>(total);
  }
  return m;
}

Json to_json(const EvalMetrics& m) {
  Json j{{"coverage", m.coverage}, {"fused_count", m.fused_count}};
  j["redundancy"] = m.redundancy ? Json(*m.redundancy) : Json(nullptr);
  j["detail_retention"] = m.detail_retention ? Json(*m.detail_retention) : Json(nullptr);
  j["untraced"] = m.untraced;
  return j;
}

}  // namespace gsfuse
