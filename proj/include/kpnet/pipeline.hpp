#pragma once

#include "kpnet/aggregate.hpp"
#include "kpnet/pck.hpp"
#include "kpnet/pipeline_config.hpp"
#include "kpnet/types.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace kpnet {

/// A dataset directory: manifest.json, clouds/, annotations/ and (for
/// synthetic sets) gt/.
struct Dataset {
  DatasetManifest manifest;
  std::vector<ModelCloud> clouds;               // manifest order
  std::vector<RawAnnotationSet> annotations;    // empty lists when no file
  std::optional<std::vector<AggregatedKeypointSet>> truth;

  std::vector<std::size_t> indices(Split split) const;
};

Dataset load_dataset(const std::filesystem::path& dir);

nlohmann::json clusters_to_json(const ClusterResult& clusters, std::span<const ModelCloud> clouds);
ClusterResult clusters_from_json(const nlohmann::json& j, std::span<const ModelCloud> clouds);

/// synth: manifest, clouds, simulated annotations and ground truth.
void run_synth(const PipelineConfig& cfg, const std::filesystem::path& out);

/// aggregate: aggregated/<id>.json, clusters.json, diagnostics.json,
/// gtheta.json and timings.json (the only non-deterministic file).
AggregateResult run_aggregate(const PipelineConfig& cfg, const std::filesystem::path& data,
                              const std::filesystem::path& out);

struct EmbedSummary {
  TripletStats triplets;
  std::vector<double> loss_history;
  int models = 0;
};

/// train-embed: contrastive training on the train split of an aggregated set.
EmbedSummary run_train_embed(const PipelineConfig& cfg, const std::filesystem::path& data,
                             const std::filesystem::path& aggregated, const std::filesystem::path& out);

/// project: per test model, renders a target silhouette at a seeded true
/// viewpoint, recovers the viewpoint (bin search + fine-tuning), transfers the
/// dense embeddings and predicts ground-truth keypoints by prototype matching.
void run_project(const PipelineConfig& cfg, const std::filesystem::path& data, const std::filesystem::path& embedding,
                 const std::filesystem::path& out);

/// evaluate: pck.csv and pck_summary.json from a predictions file.
PckReport run_evaluate(const PipelineConfig& cfg, const std::filesystem::path& predictions,
                       const std::filesystem::path& out);

}  // namespace kpnet
