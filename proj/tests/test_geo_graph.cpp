#include <doctest.h>

#include "kpnet/geo_graph.hpp"
#include "kpnet/nms.hpp"
#include "kpnet/rng.hpp"
#include "oracles.hpp"

#include <random>

using namespace kpnet;

namespace {

PointMatrix random_cloud(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  PointMatrix p(n, 3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  return p;
}

}  // namespace

TEST_CASE("knn graph edges match brute force") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = random_cloud(40, seed);
    const auto g = build_knn_graph(p, 6);
    const auto w = oracle::knn_adjacency(p, 6);
    for (int i = 0; i < 40; ++i) {
      int edges = 0;
      for (int j = 0; j < 40; ++j) edges += std::isfinite(w[i][j]);
      REQUIRE(static_cast<int>(g.adjacency[i].size()) == edges);
      for (const auto& e : g.adjacency[i]) CHECK(e.length == doctest::Approx(w[i][e.to]).epsilon(1e-14));
      for (std::size_t t = 1; t < g.adjacency[i].size(); ++t) CHECK(g.adjacency[i][t - 1].to < g.adjacency[i][t].to);
    }
  }
}

TEST_CASE("geodesic neighbourhoods agree with floyd-warshall on 50 points") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = random_cloud(50, 100 + seed);
    const auto g = build_knn_graph(p, 5);
    const auto geo = oracle::floyd_warshall(oracle::knn_adjacency(p, 5));
    for (int size : {1, 10, 25, 50, 55}) {
      for (int s = 0; s < 50; ++s) {
        const auto nb = geodesic_neighborhood(g, s, size);
        const auto want = oracle::neighborhood(geo, s, size);
        REQUIRE(nb.indices == want);
        for (std::size_t t = 0; t < want.size(); ++t) CHECK(nb.distances[t] == doctest::Approx(geo[s][want[t]]).epsilon(1e-12));
        CHECK(nb.truncated == (static_cast<int>(want.size()) < size));
      }
    }
    const auto d0 = shortest_paths(g, 0);
    for (int j = 0; j < 50; ++j)
      if (std::isfinite(geo[0][j])) CHECK(d0[j] == doctest::Approx(geo[0][j]).epsilon(1e-12));
  }
}

TEST_CASE("disconnected graph keeps components apart") {
  PointMatrix p(8, 3);
  for (int i = 0; i < 4; ++i) {
    p.row(i) << 0.01 * i, 0, 0;
    p.row(4 + i) << 10 + 0.01 * i, 0, 0;
  }
  const auto g = build_knn_graph(p, 2);
  CHECK_FALSE(is_connected(g));
  const auto comp = connected_components(g);
  CHECK(comp == std::vector<int>{0, 0, 0, 0, 1, 1, 1, 1});
  const auto nb = geodesic_neighborhood(g, 0, 6);
  CHECK(nb.truncated);
  CHECK(nb.indices.size() == 4);
  CHECK(std::isinf(shortest_paths(g, 0)[5]));
}

TEST_CASE("graph smoothing equals the dense-matrix product") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = random_cloud(50, 500 + seed);
    Rng rng(seed);
    std::normal_distribution<double> nd;
    std::vector<double> v(50);
    for (auto& x : v) x = nd(rng);
    const auto g = build_knn_graph(p, 6);
    const auto geo = oracle::floyd_warshall(oracle::knn_adjacency(p, 6));
    for (double h : {0.03, 0.2, 1.0}) {
      const auto got = graph_gaussian_smooth(v, g, h, 12);
      const auto want = oracle::dense_smooth(v, geo, 12, h);
      for (int i = 0; i < 50; ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-10);
    }
  }
}

TEST_CASE("smoothing a constant field is the identity") {
  const auto p = random_cloud(60, 9);
  const std::vector<double> v(60, 2.5);
  for (double x : graph_gaussian_smooth(v, build_knn_graph(p, 8))) CHECK(x == doctest::Approx(2.5).epsilon(1e-14));
}

TEST_CASE("nms keeps exactly the neighbourhood minima") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = random_cloud(50, 900 + seed);
    Rng rng(seed);
    std::uniform_real_distribution<double> u;
    std::vector<double> v(50);
    for (auto& x : v) x = u(rng);
    const auto g = build_knn_graph(p, 6);
    const auto nbs = all_neighborhoods(g, 10);
    const auto geo = oracle::floyd_warshall(oracle::knn_adjacency(p, 6));
    std::vector<int> want;
    for (int i = 0; i < 50; ++i) {
      bool min = true;
      for (int j : oracle::neighborhood(geo, i, 10)) min = min && v[i] <= v[j];
      if (min) want.push_back(i);
    }
    CHECK(nms_minima(v, g, nbs) == want);
  }
}

TEST_CASE("nms collapses a flat plateau to its lowest index") {
  PointMatrix p(6, 3);
  for (int i = 0; i < 6; ++i) p.row(i) << 0.1 * i, 0, 0;
  const auto g = build_knn_graph(p, 2);
  const auto nbs = all_neighborhoods(g, 3);
  const std::vector<double> v{5, 1, 1, 1, 4, 0.5};
  CHECK(nms_minima(v, g, nbs) == std::vector<int>{1, 5});
  const std::vector<double> flat(6, 1.0);
  CHECK(nms_minima(flat, g, nbs) == std::vector<int>{0});
}
