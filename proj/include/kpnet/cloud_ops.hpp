#pragma once

#include "kpnet/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace kpnet {

/// Translates the centroid to the origin and scales so the farthest point
/// has unit norm. Throws DegenerateCloud when all points coincide.
ModelCloud normalize_cloud(const ModelCloud& cloud);

/// Similarity transform applied by normalize_cloud: p' = (p - center) * scale.
struct NormalizeTransform {
  Vec3 center = Vec3::Zero();
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return (p - center) * scale; }
};
NormalizeTransform normalization_of(const ModelCloud& cloud);

/// Index of the cloud vertex nearest to `p` (lowest index on ties).
int snap_to_vertex(const ModelCloud& cloud, const Vec3& p);

/// Snapped vertex indices per annotator, in annotator order.
std::vector<std::vector<int>> snap_annotations(const ModelCloud& cloud, const RawAnnotationSet& set);

struct SplitRatios {
  int train = 7;
  int val = 1;
  int test = 2;
  int sum() const { return train + val + test; }
};

/// Split assignment for one category: val and test get floor(n * r) rows,
/// the remainder goes to train. Membership is a seeded shuffle.
std::vector<Split> make_splits(std::span<const std::string> model_ids, SplitRatios ratios, std::uint64_t seed);

/// Per-category stratified version of make_splits over (id, category) pairs.
std::vector<Split> make_stratified_splits(std::span<const std::string> model_ids,
                                          std::span<const std::string> categories, SplitRatios ratios,
                                          std::uint64_t seed);

/// Largest |count - n * r| over all categories and splits of a manifest.
double split_ratio_deviation(const DatasetManifest& manifest, SplitRatios ratios = {});

struct KeypointCountStats {
  int minimum = 0;
  int maximum = 0;
  double median = 0.0;
  int models = 0;
};

/// Distribution of per-model keypoint counts (each set is one model).
KeypointCountStats keypoint_count_stats(std::span<const AggregatedKeypointSet> sets);

/// Throws SchemaError when a group violates its kind's invariants.
void validate_symmetry(const SymmetryGroup& group);

/// Throws SchemaError on duplicate point indices or negative semantic indices.
void validate_aggregated(const AggregatedKeypointSet& set);

/// True when the semantic indices used across `sets` are exactly 0..K-1.
bool semantic_indices_dense(std::span<const AggregatedKeypointSet> sets);

}  // namespace kpnet
