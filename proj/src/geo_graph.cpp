#include "kpnet/geo_graph.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace kpnet {

namespace {

constexpr double kMinEdge = 1e-12;

using QueueItem = std::pair<double, int>;
using MinQueue = std::priority_queue<QueueItem, std::vector<QueueItem>, std::greater<QueueItem>>;

}  // namespace

CloudGraph build_knn_graph(const PointMatrix& points, int k) {
  const int n = static_cast<int>(points.rows());
  if (k < 1 || k >= n) throw std::invalid_argument("build_knn_graph: need 1 <= k < number of points");

  std::vector<std::vector<int>> nbrs(n);
  std::vector<std::pair<double, int>> cand(n - 1);
  for (int i = 0; i < n; ++i) {
    int c = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      cand[c++] = {(points.row(i) - points.row(j)).squaredNorm(), j};
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    for (int t = 0; t < k; ++t) nbrs[i].push_back(cand[t].second);
  }

  // symmetric closure
  for (int i = 0; i < n; ++i)
    for (int j : std::vector<int>(nbrs[i])) nbrs[j].push_back(i);

  CloudGraph g;
  g.k = k;
  g.adjacency.resize(n);
  for (int i = 0; i < n; ++i) {
    auto& list = nbrs[i];
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
    for (int j : list) g.adjacency[i].push_back({j, std::max((points.row(i) - points.row(j)).norm(), kMinEdge)});
  }
  return g;
}

std::vector<int> connected_components(const CloudGraph& graph) {
  const int n = static_cast<int>(graph.size());
  std::vector<int> label(n, -1);
  int next = 0;
  std::vector<int> stack;
  for (int s = 0; s < n; ++s) {
    if (label[s] >= 0) continue;
    label[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (const auto& e : graph.adjacency[u])
        if (label[e.to] < 0) {
          label[e.to] = next;
          stack.push_back(e.to);
        }
    }
    ++next;
  }
  return label;
}

bool is_connected(const CloudGraph& graph) {
  const auto labels = connected_components(graph);
  return std::all_of(labels.begin(), labels.end(), [](int l) { return l == 0; });
}

std::vector<double> shortest_paths(const CloudGraph& graph, int source) {
  std::vector<double> dist(graph.size(), std::numeric_limits<double>::infinity());
  MinQueue queue;
  dist[source] = 0.0;
  queue.push({0.0, source});
  while (!queue.empty()) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (d > dist[u]) continue;
    for (const auto& e : graph.adjacency[u]) {
      const double nd = d + e.length;
      if (nd < dist[e.to]) {
        dist[e.to] = nd;
        queue.push({nd, e.to});
      }
    }
  }
  return dist;
}

Neighborhood geodesic_neighborhood(const CloudGraph& graph, int seed, int size) {
  if (seed < 0 || static_cast<std::size_t>(seed) >= graph.size())
    throw std::out_of_range("geodesic_neighborhood: seed out of range");
  if (size < 1) throw std::invalid_argument("geodesic_neighborhood: size must be positive");

  Neighborhood out;
  std::vector<double> dist(graph.size(), std::numeric_limits<double>::infinity());
  std::vector<char> settled(graph.size(), 0);
  MinQueue queue;
  dist[seed] = 0.0;
  queue.push({0.0, seed});
  while (!queue.empty() && static_cast<int>(out.indices.size()) < size) {
    const auto [d, u] = queue.top();
    queue.pop();
    if (settled[u]) continue;
    settled[u] = 1;
    out.indices.push_back(u);
    out.distances.push_back(d);
    for (const auto& e : graph.adjacency[u]) {
      const double nd = d + e.length;
      if (!settled[e.to] && nd < dist[e.to]) {
        dist[e.to] = nd;
        queue.push({nd, e.to});
      }
    }
  }
  out.truncated = static_cast<int>(out.indices.size()) < size;
  return out;
}

std::vector<Neighborhood> all_neighborhoods(const CloudGraph& graph, int size) {
  std::vector<Neighborhood> out;
  out.reserve(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) out.push_back(geodesic_neighborhood(graph, static_cast<int>(i), size));
  return out;
}

std::vector<double> graph_gaussian_smooth(std::span<const double> values, std::span<const Neighborhood> neighborhoods,
                                          double bandwidth) {
  if (values.size() != neighborhoods.size())
    throw std::invalid_argument("graph_gaussian_smooth: field length does not match the cloud");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("graph_gaussian_smooth: bandwidth must be positive");
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto& nb = neighborhoods[i];
    double num = 0.0;
    double den = 0.0;
    for (std::size_t t = 0; t < nb.indices.size(); ++t) {
      const double w = std::exp(-nb.distances[t] * nb.distances[t] * inv);
      num += w * values[nb.indices[t]];
      den += w;
    }
    out[i] = num / den;
  }
  return out;
}

std::vector<double> graph_gaussian_smooth(std::span<const double> values, const CloudGraph& graph, double bandwidth,
                                          int size) {
  const auto nbs = all_neighborhoods(graph, size);
  return graph_gaussian_smooth(values, nbs, bandwidth);
}

}  // namespace kpnet
