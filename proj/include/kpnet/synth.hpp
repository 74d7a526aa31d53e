#pragma once

#include "kpnet/types.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace kpnet {

enum class ShapeKind { Table, Chair, AirplaneToy };

std::string to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& name);

struct SyntheticShapeSpec {
  ShapeKind kind = ShapeKind::Table;
  std::uint64_t seed = 0;
  std::string id = "model";
};

struct SyntheticShape {
  ModelCloud cloud;          // normalized, 2048 points
  AggregatedKeypointSet gt;  // landmarks with symmetry groups
};

/// Box-assembled procedural shape, surface-sampled to 2048 points with the
/// landmark vertices included exactly. Tables carry 8 landmarks (4 top
/// corners, 4 feet), chairs 10, airplane toys 7.
SyntheticShape generate_shape(const SyntheticShapeSpec& spec);

/// Number of landmarks generate_shape emits for a kind.
int landmark_count(ShapeKind kind);

struct AnnotatorProfile {
  std::string name = "annotator";
  double sigma = 0.03;
  double miss_rate = 0.0;
  double spurious_rate = 0.0;
  std::uint64_t permutation_seed = 0;

  void validate() const;
};

/// Standard pool: `count` annotators sharing noise/miss/spurious settings,
/// each with its own index permutation.
std::vector<AnnotatorProfile> make_annotator_pool(int count, double sigma, double miss_rate, double spurious_rate,
                                                  std::uint64_t seed);

/// Simulated clicks: each landmark kept with probability 1 - miss, perturbed
/// by isotropic Gaussian noise and snapped to the nearest vertex; spurious
/// clicks land on uniform random vertices. Kept landmarks follow the
/// annotator's private permutation, spurious clicks come last. Pre-snap
/// displacement norms are appended to `displacements` when given.
RawAnnotationSet simulate_annotations(const SyntheticShape& shape, std::span<const AnnotatorProfile> profiles,
                                      std::uint64_t seed, std::vector<double>* displacements = nullptr);

struct TruthScore {
  double precision = 1.0;
  double recall = 0.0;
  double consistency = 1.0;
  bool precision_undefined = false;
  int matched = 0;
  int recovered = 0;
  int truth = 0;
};

/// Greedy nearest-first one-to-one matching within `radius` per model, then
/// index consistency: the fraction of matches agreeing with the single
/// recovered-to-truth index bijection that explains the most matches.
TruthScore score_against_truth(std::span<const AggregatedKeypointSet> recovered,
                               std::span<const AggregatedKeypointSet> truth, std::span<const ModelCloud> clouds,
                               double radius = 0.05);

}  // namespace kpnet
