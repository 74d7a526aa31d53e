#include "kpnet/nms.hpp"

#include <algorithm>
#include <stdexcept>

namespace kpnet {

std::vector<int> nms_minima(std::span<const double> values, const CloudGraph& graph,
                            std::span<const Neighborhood> neighborhoods) {
  const int n = static_cast<int>(values.size());
  if (graph.size() != values.size() || neighborhoods.size() != values.size())
    throw std::invalid_argument("nms: field length does not match the graph");

  std::vector<char> is_min(n, 0);
  for (int i = 0; i < n; ++i) {
    bool ok = true;
    for (int j : neighborhoods[i].indices)
      if (values[j] < values[i]) {
        ok = false;
        break;
      }
    is_min[i] = ok;
  }

  // collapse plateaus: flood equal-valued vertices from each unclaimed minimum
  std::vector<char> claimed(n, 0);
  std::vector<int> out;
  std::vector<int> stack;
  for (int i = 0; i < n; ++i) {
    if (!is_min[i] || claimed[i]) continue;
    out.push_back(i);
    claimed[i] = 1;
    stack.push_back(i);
    while (!stack.empty()) {
      const int u = stack.back();
      stack.pop_back();
      for (const auto& e : graph.adjacency[u])
        if (!claimed[e.to] && values[e.to] == values[i]) {
          claimed[e.to] = 1;
          stack.push_back(e.to);
        }
    }
  }
  return out;
}

std::vector<int> nms_candidates(std::span<const double> fidelity, const CloudGraph& graph,
                                std::span<const Neighborhood> neighborhoods, const NmsOptions& options) {
  const auto smooth = graph_gaussian_smooth(fidelity, neighborhoods, options.bandwidth);
  auto out = nms_minima(smooth, graph, neighborhoods);
  std::stable_sort(out.begin(), out.end(), [&](int a, int b) { return smooth[a] < smooth[b]; });
  return out;
}

std::vector<int> nms_candidates(std::span<const double> fidelity, const CloudGraph& graph,
                                const NmsOptions& options) {
  const auto nbs = all_neighborhoods(graph, options.neighborhood);
  return nms_candidates(fidelity, graph, nbs, options);
}

}  // namespace kpnet
