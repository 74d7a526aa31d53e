#pragma once

#include "kpnet/geo_graph.hpp"

#include <span>
#include <vector>

namespace kpnet {

/// Non-minimum suppression over geodesic neighbourhoods. Vertex i survives
/// when values[i] <= values[j] for every j in its neighbourhood; survivors
/// joined by a path of equal-valued vertices collapse to the lowest index.
/// `values` should already be smoothed.
std::vector<int> nms_minima(std::span<const double> values, const CloudGraph& graph,
                            std::span<const Neighborhood> neighborhoods);

struct NmsOptions {
  double bandwidth = kDefaultSmoothBandwidth;
  int neighborhood = kNeighborhoodSize;
};

/// Smooths `fidelity` with the graph Gaussian filter, then applies nms_minima.
/// Candidates are returned in ascending smoothed-fidelity order (index on ties).
std::vector<int> nms_candidates(std::span<const double> fidelity, const CloudGraph& graph,
                                std::span<const Neighborhood> neighborhoods, const NmsOptions& options = {});
std::vector<int> nms_candidates(std::span<const double> fidelity, const CloudGraph& graph,
                                const NmsOptions& options = {});

}  // namespace kpnet
