#pragma once

#include "kpnet/embed_net.hpp"
#include "kpnet/embed_train.hpp"
#include "kpnet/geo_graph.hpp"
#include "kpnet/saliency.hpp"
#include "kpnet/types.hpp"

#include <json.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kpnet {

struct AggregateConfig {
  double sigma = kAnnotationSigma;
  int graph_k = kDefaultGraphK;
  double smooth_bandwidth = kDefaultSmoothBandwidth;
  int neighborhood = kNeighborhoodSize;
  // spatial bootstrap of pseudo-labels (pooled normalized annotations)
  double bootstrap_eps = 0.08;
  double bootstrap_min_fraction = 0.3;  // of annotator lists over all models
  // clustering of pooled candidates
  double perplexity = 0.0;  // <= 0 selects min(30, floor(N / 4))
  int tsne_iterations = 1000;
  double cluster_eps = 3.0;
  double cluster_min_fraction = 0.25;  // of models
  int max_candidates = 64;
  // a candidate needs this fraction of the model's annotators clicking
  // inside its geodesic neighbourhood (at least one click)
  double support_fraction = 0.3;
  int iterations = 1;
  TrainConfig train{};
  std::uint64_t seed = 0;

  void validate() const;
  int bootstrap_min_samples(int annotator_lists) const;
  int cluster_min_samples(int models) const;
};

struct Candidate {
  int model = 0;
  int point = 0;
  double fidelity = 0.0;  // smoothed fidelity at the NMS minimum
};

struct ClusterResult {
  std::vector<Candidate> candidates;
  Eigen::MatrixXd coords;  // t-SNE output, one row per candidate
  std::vector<int> labels;  // kNoise or cluster id
  double eps = 0.0;
  int min_samples = 0;
  double perplexity = 0.0;
  std::uint64_t seed = 0;

  int cluster_count() const;
};

struct AggregateDiagnostics {
  int models = 0;
  int annotator_lists = 0;
  int annotations = 0;
  int bootstrap_clusters = 0;
  int bootstrap_noise = 0;
  std::vector<double> gtheta_loss;  // per epoch, last iteration
  double gtheta_accuracy = 0.0;
  std::vector<int> candidates_per_model;
  int pooled_candidates = 0;
  int unsupported_candidates = 0;
  int clusters = 0;
  int noise_candidates = 0;
  std::vector<int> cluster_sizes;
  std::vector<int> singleton_indices;  // semantic indices present on fewer than two models
  double silhouette = 0.0;
  std::map<std::string, double> timings;  // seconds per stage; not deterministic

  nlohmann::json to_json(bool with_timings = false) const;
};

struct AggregateResult {
  std::vector<AggregatedKeypointSet> sets;
  ClusterResult clusters;
  AggregateDiagnostics diagnostics;
  std::optional<EmbeddingNet> net;  // absent when iterations == 0
};

/// Consensus keypoints from raw multi-annotator clicks.
///   bootstrap: pooled clicks clustered in 3D give initial labels and the
///              initial keypoints (per model medoid click of each cluster)
///   per iteration: train g_theta as a classifier on the current labels,
///              fidelity map + NMS per model, t-SNE + DBSCAN over pooled
///              candidate embeddings, semantic index = cluster id
/// iterations == 0 returns the bootstrap initialization.
AggregateResult aggregate_run(std::span<const ModelCloud> clouds, std::span<const RawAnnotationSet> annotations,
                              const AggregateConfig& cfg);

enum class DecisionAction { Accept, Reject, Merge };

std::string to_string(DecisionAction action);
DecisionAction decision_action_from_string(const std::string& name);

struct ClusterDecision {
  DecisionAction action = DecisionAction::Accept;
  int target = -1;  // merge target cluster id
};

/// Expert verification: per cluster id decisions (missing = accept) and
/// symmetry declarations expressed in cluster ids.
struct VerificationDecision {
  std::map<int, ClusterDecision> decisions;
  std::vector<SymmetryGroup> symmetries;
};

/// Resolves the cluster id each input cluster ends up in (after merges), or
/// -1 for rejected clusters. Throws InvalidDecision on merges into rejected
/// or unknown clusters and on merge cycles.
std::map<int, int> resolve_decisions(const std::vector<int>& cluster_ids, const VerificationDecision& decision);

/// Applies verification to aggregated sets whose semantic indices are cluster
/// ids: rejected clusters vanish, merged clusters share one index, surviving
/// indices are re-densified in ascending cluster order, symmetry groups are
/// remapped and attached to every set. When merging leaves two keypoints of
/// one model in the same index, the first listed keypoint is kept.
std::vector<AggregatedKeypointSet> apply_verification(std::span<const AggregatedKeypointSet> sets,
                                                      const VerificationDecision& decision);

}  // namespace kpnet
