#pragma once

#include "kpnet/types.hpp"

#include <span>
#include <vector>

namespace kpnet {

inline constexpr int kDefaultGraphK = 8;
inline constexpr int kNeighborhoodSize = 55;
inline constexpr double kDefaultSmoothBandwidth = 0.03;

struct GraphEdge {
  int to = 0;
  double length = 0.0;
};

/// Symmetrized k-nearest-neighbour graph over cloud vertices; adjacency lists
/// are sorted by neighbour index.
struct CloudGraph {
  int k = 0;
  std::vector<std::vector<GraphEdge>> adjacency;

  std::size_t size() const { return adjacency.size(); }
};

CloudGraph build_knn_graph(const PointMatrix& points, int k = kDefaultGraphK);
inline CloudGraph build_knn_graph(const ModelCloud& cloud, int k = kDefaultGraphK) {
  return build_knn_graph(cloud.points, k);
}

/// Component id per vertex, numbered by lowest member index.
std::vector<int> connected_components(const CloudGraph& graph);
bool is_connected(const CloudGraph& graph);

/// Single-source shortest-path lengths (infinity when unreachable).
std::vector<double> shortest_paths(const CloudGraph& graph, int source);

struct Neighborhood {
  std::vector<int> indices;       // seed first, then ascending (distance, index)
  std::vector<double> distances;  // geodesic distance per entry
  bool truncated = false;         // component smaller than the requested size
};

/// The `size` vertices closest to `seed` by graph distance, via Dijkstra with
/// (distance, index) ordering.
Neighborhood geodesic_neighborhood(const CloudGraph& graph, int seed, int size = kNeighborhoodSize);

/// Neighbourhood of every vertex.
std::vector<Neighborhood> all_neighborhoods(const CloudGraph& graph, int size = kNeighborhoodSize);

/// Normalized Gaussian average over each vertex's geodesic neighbourhood with
/// weights exp(-d^2 / (2 bandwidth^2)).
std::vector<double> graph_gaussian_smooth(std::span<const double> values, std::span<const Neighborhood> neighborhoods,
                                          double bandwidth = kDefaultSmoothBandwidth);
std::vector<double> graph_gaussian_smooth(std::span<const double> values, const CloudGraph& graph,
                                          double bandwidth = kDefaultSmoothBandwidth, int size = kNeighborhoodSize);

}  // namespace kpnet
