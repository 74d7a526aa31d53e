#include "kpnet/aggregate.hpp"

#include "kpnet/cloud_ops.hpp"
#include "kpnet/dbscan.hpp"
#include "kpnet/error.hpp"
#include "kpnet/fidelity.hpp"
#include "kpnet/nms.hpp"
#include "kpnet/rng.hpp"
#include "kpnet/tsne.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

namespace kpnet {

void AggregateConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidConfig, what); };
  if (!(sigma > 0.0)) fail("aggregate.sigma must be positive");
  if (graph_k < 1 || graph_k >= static_cast<int>(kCloudSize)) fail("aggregate.graph_k must lie in [1, 2048)");
  if (!(smooth_bandwidth > 0.0)) fail("aggregate.smooth_bandwidth must be positive");
  if (neighborhood < 1) fail("aggregate.neighborhood must be at least 1");
  if (!(bootstrap_eps > 0.0)) fail("aggregate.bootstrap_eps must be positive");
  if (bootstrap_min_fraction < 0.0 || bootstrap_min_fraction > 1.0) fail("aggregate.bootstrap_min_fraction must lie in [0, 1]");
  if (tsne_iterations < 1) fail("aggregate.tsne_iterations must be at least 1");
  if (!(cluster_eps > 0.0)) fail("aggregate.cluster_eps must be positive");
  if (cluster_min_fraction < 0.0 || cluster_min_fraction > 1.0) fail("aggregate.cluster_min_fraction must lie in [0, 1]");
  if (max_candidates < 1) fail("aggregate.max_candidates must be at least 1");
  if (support_fraction < 0.0 || support_fraction > 1.0) fail("aggregate.support_fraction must lie in [0, 1]");
  if (iterations < 0) fail("aggregate.iterations must be non-negative");
  train.validate();
}

int AggregateConfig::bootstrap_min_samples(int annotator_lists) const {
  return std::max(2, static_cast<int>(std::floor(bootstrap_min_fraction * annotator_lists)));
}

int AggregateConfig::cluster_min_samples(int models) const {
  return std::max(2, static_cast<int>(std::floor(cluster_min_fraction * models)));
}

int ClusterResult::cluster_count() const { return kpnet::cluster_count(labels); }

nlohmann::json AggregateDiagnostics::to_json(bool with_timings) const {
  nlohmann::json j = {
      {"models", models},
      {"annotator_lists", annotator_lists},
      {"annotations", annotations},
      {"bootstrap_clusters", bootstrap_clusters},
      {"bootstrap_noise", bootstrap_noise},
      {"gtheta_loss", gtheta_loss},
      {"gtheta_accuracy", gtheta_accuracy},
      {"candidates_per_model", candidates_per_model},
      {"pooled_candidates", pooled_candidates},
      {"unsupported_candidates", unsupported_candidates},
      {"clusters", clusters},
      {"noise_candidates", noise_candidates},
      {"cluster_sizes", cluster_sizes},
      {"singleton_indices", singleton_indices},
      {"silhouette", silhouette},
  };
  if (with_timings) j["timings"] = timings;
  return j;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Consensus vertex among clicks: most clicked vertex, then the one with the
// smallest summed distance to the other clicks, then the lowest index.
int consensus_click(const PointMatrix& pts, const std::vector<int>& clicks) {
  std::map<int, int> counts;
  for (int c : clicks) ++counts[c];
  int best = -1, best_count = 0;
  double best_spread = 0.0;
  for (const auto& [v, count] : counts) {
    double spread = 0.0;
    for (int c : clicks) spread += (pts.row(v) - pts.row(c)).norm();
    if (best < 0 || count > best_count || (count == best_count && spread < best_spread)) {
      best = v;
      best_count = count;
      best_spread = spread;
    }
  }
  return best;
}

struct Bootstrap {
  std::vector<LabeledPoint> samples;  // click vertices with their cluster label
  std::vector<AggregatedKeypointSet> initial;
  int clusters = 0;
  int noise = 0;
};

Bootstrap bootstrap_labels(std::span<const ModelCloud> clouds, const std::vector<AnnotatorVertices>& clicks,
                           const AggregateConfig& cfg, int annotator_lists) {
  std::vector<LabeledPoint> pooled;
  for (std::size_t m = 0; m < clicks.size(); ++m)
    for (const auto& list : clicks[m])
      for (int v : list) pooled.push_back({static_cast<int>(m), v, 0});

  Eigen::MatrixXd xyz(static_cast<Eigen::Index>(pooled.size()), 3);
  for (std::size_t i = 0; i < pooled.size(); ++i)
    xyz.row(static_cast<Eigen::Index>(i)) = clouds[pooled[i].cloud].points.row(pooled[i].point);
  const auto labels = dbscan_labels(xyz, cfg.bootstrap_eps, cfg.bootstrap_min_samples(annotator_lists));

  Bootstrap b;
  b.clusters = cluster_count(labels);
  std::vector<std::map<int, std::vector<int>>> per_model(clouds.size());
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    if (labels[i] == kNoise) {
      ++b.noise;
      continue;
    }
    b.samples.push_back({pooled[i].cloud, pooled[i].point, labels[i]});
    per_model[pooled[i].cloud][labels[i]].push_back(pooled[i].point);
  }
  for (std::size_t m = 0; m < clouds.size(); ++m) {
    AggregatedKeypointSet set;
    set.model_id = clouds[m].id;
    std::set<int> taken;
    for (const auto& [label, members] : per_model[m]) {
      const int v = consensus_click(clouds[m].points, members);
      if (taken.insert(v).second) set.keypoints.push_back({v, label});
    }
    b.initial.push_back(std::move(set));
  }
  return b;
}

}  // namespace

AggregateResult aggregate_run(std::span<const ModelCloud> clouds, std::span<const RawAnnotationSet> annotations,
                              const AggregateConfig& cfg) {
  cfg.validate();
  if (clouds.size() < 2) throw Error(ErrorCode::InsufficientModels, "aggregation needs at least two models");
  if (annotations.size() != clouds.size())
    throw Error(ErrorCode::SchemaError, "one annotation set per model is required");

  AggregateResult result;
  auto& diag = result.diagnostics;
  const std::size_t models = clouds.size();
  diag.models = static_cast<int>(models);

  auto t0 = Clock::now();
  std::vector<AnnotatorVertices> clicks;
  std::vector<int> annotators_per_model;
  for (std::size_t m = 0; m < models; ++m) {
    if (annotations[m].model_id != clouds[m].id)
      throw Error(ErrorCode::SchemaError, "annotation set '" + annotations[m].model_id + "' does not match model '" +
                                              clouds[m].id + "'");
    clicks.push_back(snap_annotations(clouds[m], annotations[m]));
    int lists = 0;
    for (const auto& list : clicks.back()) {
      if (!list.empty()) ++lists;
      diag.annotations += static_cast<int>(list.size());
    }
    annotators_per_model.push_back(lists);
    diag.annotator_lists += lists;
  }
  if (diag.annotator_lists == 0) throw Error(ErrorCode::EmptyConsensus, "no annotations to aggregate");

  auto boot = bootstrap_labels(clouds, clicks, cfg, diag.annotator_lists);
  diag.bootstrap_clusters = boot.clusters;
  diag.bootstrap_noise = boot.noise;
  diag.timings["bootstrap"] = seconds_since(t0);
  result.sets = boot.initial;
  if (cfg.iterations == 0) {
    if (boot.clusters == 0) throw Error(ErrorCode::EmptyConsensus, "bootstrap clustering found no clusters");
    diag.clusters = boot.clusters;
    return result;
  }

  t0 = Clock::now();
  std::vector<PointMatrix> pts;
  std::vector<CloudGraph> graphs;
  std::vector<std::vector<Neighborhood>> hoods;
  for (const auto& c : clouds) {
    pts.push_back(c.points);
    graphs.push_back(build_knn_graph(c.points, cfg.graph_k));
    hoods.push_back(all_neighborhoods(graphs.back(), cfg.neighborhood));
  }
  diag.timings["graphs"] = seconds_since(t0);

  std::vector<LabeledPoint> samples = boot.samples;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    if (iter > 0) {
      samples.clear();
      for (std::size_t m = 0; m < models; ++m)
        for (const auto& k : result.sets[m].keypoints) samples.push_back({static_cast<int>(m), k.point_index, k.semantic_index});
    }

    t0 = Clock::now();
    TrainConfig tc = cfg.train;
    tc.seed = stage_seed(cfg.seed, "gtheta/" + std::to_string(iter));
    auto trained = train_gtheta(pts, samples, tc);
    diag.gtheta_loss = trained.loss_history;
    diag.gtheta_accuracy = trained.train_accuracy;
    diag.timings["train_gtheta_" + std::to_string(iter)] = seconds_since(t0);

    t0 = Clock::now();
    std::vector<const PointMatrix*> cloud_ptrs;
    std::vector<Eigen::MatrixXd> fields;
    for (std::size_t m = 0; m < models; ++m) {
      cloud_ptrs.push_back(&pts[m]);
      fields.push_back(trained.net.forward(pts[m]));
    }
    const FidelityEngine engine(cloud_ptrs, fields, clicks, cfg.sigma);

    // NMS candidates, each moved to the local click consensus
    ClusterResult cr;
    diag.candidates_per_model.assign(models, 0);
    diag.unsupported_candidates = 0;
    NmsOptions nms_opt{cfg.smooth_bandwidth, cfg.neighborhood};
    for (std::size_t m = 0; m < models; ++m) {
      const auto fmap = engine.map(m);
      const auto minima = nms_candidates(fmap.values, graphs[m], hoods[m], nms_opt);
      const auto smoothed = graph_gaussian_smooth(fmap.values, hoods[m], cfg.smooth_bandwidth);

      std::vector<char> clicked(pts[m].rows(), 0);
      std::vector<int> all_clicks;
      for (const auto& list : clicks[m])
        for (int v : list) {
          clicked[v] = 1;
          all_clicks.push_back(v);
        }
      const int min_support = std::max(1, static_cast<int>(std::floor(cfg.support_fraction * annotators_per_model[m])));

      std::set<int> taken;
      int kept = 0;
      for (int cand : minima) {
        if (kept >= cfg.max_candidates) break;
        std::set<int> hood(hoods[m][cand].indices.begin(), hoods[m][cand].indices.end());
        std::vector<int> local;
        for (int v : all_clicks)
          if (hood.count(v)) local.push_back(v);
        if (static_cast<int>(local.size()) < min_support) {
          ++diag.unsupported_candidates;
          continue;
        }
        const int v = consensus_click(pts[m], local);
        if (!taken.insert(v).second) continue;
        cr.candidates.push_back({static_cast<int>(m), v, smoothed[cand]});
        ++kept;
      }
      diag.candidates_per_model[m] = kept;
    }
    diag.pooled_candidates = static_cast<int>(cr.candidates.size());
    diag.timings["fidelity_nms_" + std::to_string(iter)] = seconds_since(t0);

    t0 = Clock::now();
    const auto n = static_cast<Eigen::Index>(cr.candidates.size());
    Eigen::MatrixXd emb(n, fields.empty() ? 0 : fields[0].cols());
    for (Eigen::Index i = 0; i < n; ++i) emb.row(i) = fields[cr.candidates[i].model].row(cr.candidates[i].point);
    TsneConfig tsne;
    tsne.perplexity = cfg.perplexity > 0.0 ? cfg.perplexity : std::max(1.0, default_perplexity(static_cast<int>(n)));
    tsne.iterations = cfg.tsne_iterations;
    tsne.seed = stage_seed(cfg.seed, "tsne/" + std::to_string(iter));
    cr.perplexity = tsne.perplexity;
    cr.seed = tsne.seed;
    cr.coords = tsne_2d(emb, tsne);
    cr.eps = cfg.cluster_eps;
    cr.min_samples = cfg.cluster_min_samples(static_cast<int>(models));
    cr.labels = dbscan_labels(cr.coords, cr.eps, cr.min_samples);
    diag.timings["cluster_" + std::to_string(iter)] = seconds_since(t0);

    const int k = cr.cluster_count();
    if (k == 0) throw Error(ErrorCode::EmptyConsensus, "candidate clustering found no clusters");
    diag.clusters = k;
    diag.cluster_sizes.assign(k, 0);
    diag.noise_candidates = 0;
    for (int l : cr.labels) {
      if (l == kNoise) ++diag.noise_candidates;
      else ++diag.cluster_sizes[l];
    }
    diag.silhouette = silhouette_score(cr.coords, cr.labels);

    // per model and cluster keep the lowest-fidelity candidate
    std::vector<AggregatedKeypointSet> next(models);
    for (std::size_t m = 0; m < models; ++m) next[m].model_id = clouds[m].id;
    std::vector<std::vector<int>> best(models, std::vector<int>(k, -1));
    for (std::size_t i = 0; i < cr.candidates.size(); ++i) {
      if (cr.labels[i] == kNoise) continue;
      auto& slot = best[cr.candidates[i].model][cr.labels[i]];
      if (slot < 0 || cr.candidates[i].fidelity < cr.candidates[slot].fidelity) slot = static_cast<int>(i);
    }
    std::vector<std::set<int>> models_per_index(k);
    for (std::size_t m = 0; m < models; ++m)
      for (int c = 0; c < k; ++c)
        if (best[m][c] >= 0) {
          next[m].keypoints.push_back({cr.candidates[best[m][c]].point, c});
          models_per_index[c].insert(static_cast<int>(m));
        }
    diag.singleton_indices.clear();
    for (int c = 0; c < k; ++c)
      if (models_per_index[c].size() < 2) diag.singleton_indices.push_back(c);

    result.sets = std::move(next);
    result.clusters = std::move(cr);
    result.net = std::move(trained.net);
  }
  return result;
}

std::string to_string(DecisionAction action) {
  switch (action) {
    case DecisionAction::Accept: return "accept";
    case DecisionAction::Reject: return "reject";
    case DecisionAction::Merge: return "merge";
  }
  return "accept";
}

DecisionAction decision_action_from_string(const std::string& name) {
  if (name == "accept") return DecisionAction::Accept;
  if (name == "reject") return DecisionAction::Reject;
  if (name == "merge") return DecisionAction::Merge;
  throw Error(ErrorCode::SchemaError, "unknown decision action '" + name + "'");
}

std::map<int, int> resolve_decisions(const std::vector<int>& cluster_ids, const VerificationDecision& decision) {
  const std::set<int> known(cluster_ids.begin(), cluster_ids.end());
  auto action_of = [&](int id) {
    const auto it = decision.decisions.find(id);
    return it == decision.decisions.end() ? ClusterDecision{} : it->second;
  };
  for (const auto& [id, d] : decision.decisions) {
    if (!known.count(id)) throw Error(ErrorCode::InvalidDecision, "decision for unknown cluster " + std::to_string(id));
    if (d.action != DecisionAction::Merge) continue;
    if (!known.count(d.target))
      throw Error(ErrorCode::InvalidDecision, "merge target " + std::to_string(d.target) + " does not exist");
    if (d.target == id) throw Error(ErrorCode::InvalidDecision, "cluster " + std::to_string(id) + " merges into itself");
  }

  std::map<int, int> out;
  for (int id : known) {
    int at = id;
    std::set<int> seen{at};
    while (true) {
      const auto d = action_of(at);
      if (d.action == DecisionAction::Reject) {
        if (at != id)
          throw Error(ErrorCode::InvalidDecision,
                      "cluster " + std::to_string(id) + " merges into rejected cluster " + std::to_string(at));
        at = -1;
        break;
      }
      if (d.action == DecisionAction::Accept) break;
      at = d.target;
      if (!seen.insert(at).second) throw Error(ErrorCode::InvalidDecision, "merge cycle through cluster " + std::to_string(at));
    }
    out[id] = at;
  }
  return out;
}

std::vector<AggregatedKeypointSet> apply_verification(std::span<const AggregatedKeypointSet> sets,
                                                      const VerificationDecision& decision) {
  std::set<int> ids;
  for (const auto& s : sets)
    for (const auto& k : s.keypoints) ids.insert(k.semantic_index);
  // symmetry declarations may name clusters without members; they still must exist
  const auto resolved = resolve_decisions(std::vector<int>(ids.begin(), ids.end()), decision);

  std::map<int, int> dense;  // surviving root cluster -> new index
  for (const auto& [id, root] : resolved)
    if (root >= 0) dense.emplace(root, 0);
  int next = 0;
  for (auto& [root, idx] : dense) idx = next++;

  auto remap = [&](int cluster) -> int {
    const auto it = resolved.find(cluster);
    if (it == resolved.end()) throw Error(ErrorCode::InvalidDecision, "unknown cluster " + std::to_string(cluster));
    return it->second < 0 ? -1 : dense.at(it->second);
  };

  std::vector<SymmetryGroup> groups;
  for (auto g : decision.symmetries) {
    for (int& member : g.members) {
      member = remap(member);
      if (member < 0) throw Error(ErrorCode::InvalidDecision, "symmetry group names a rejected cluster");
    }
    validate_symmetry(g);
    groups.push_back(g);
  }

  std::vector<AggregatedKeypointSet> out;
  for (const auto& s : sets) {
    AggregatedKeypointSet r;
    r.model_id = s.model_id;
    std::set<int> used;
    for (const auto& k : s.keypoints) {
      const int idx = remap(k.semantic_index);
      if (idx < 0 || !used.insert(idx).second) continue;
      r.keypoints.push_back({k.point_index, idx});
    }
    r.symmetries = groups;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace kpnet
