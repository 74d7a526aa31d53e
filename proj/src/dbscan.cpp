#include "kpnet/dbscan.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

namespace kpnet {

namespace {

/// Uniform grid with cell size eps; a radius query visits the 3^d adjacent cells.
class Grid {
 public:
  Grid(const Eigen::MatrixXd& points, double eps) : points_(points), eps_(eps) {
    for (Eigen::Index i = 0; i < points.rows(); ++i) cells_[key(points.row(i))].push_back(static_cast<int>(i));
  }

  std::vector<int> query(int i) const {
    std::vector<int> out;
    const auto centre = key(points_.row(i));
    std::vector<long> offset(centre.size(), -1);
    const double eps_sq = eps_ * eps_;
    while (true) {
      std::vector<long> k = centre;
      for (std::size_t d = 0; d < k.size(); ++d) k[d] += offset[d];
      if (auto it = cells_.find(k); it != cells_.end())
        for (int j : it->second)
          if ((points_.row(i) - points_.row(j)).squaredNorm() <= eps_sq) out.push_back(j);
      std::size_t d = 0;
      while (d < offset.size() && offset[d] == 1) offset[d++] = -1;
      if (d == offset.size()) break;
      ++offset[d];
    }
    return out;
  }

 private:
  std::vector<long> key(const Eigen::RowVectorXd& p) const {
    std::vector<long> k(static_cast<std::size_t>(p.size()));
    for (Eigen::Index d = 0; d < p.size(); ++d) k[d] = static_cast<long>(std::floor(p[d] / eps_));
    return k;
  }

  const Eigen::MatrixXd& points_;
  double eps_;
  std::map<std::vector<long>, std::vector<int>> cells_;
};

}  // namespace

std::vector<int> dbscan_labels(const Eigen::MatrixXd& points, double eps, int min_samples) {
  if (!(eps > 0.0) || min_samples < 1) throw std::invalid_argument("dbscan: need eps > 0 and min_samples >= 1");
  const int n = static_cast<int>(points.rows());
  Grid grid(points, eps);
  std::vector<std::vector<int>> nbrs(n);
  for (int i = 0; i < n; ++i) nbrs[i] = grid.query(i);

  std::vector<int> label(n, kNoise);
  std::vector<char> visited(n, 0);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    if (visited[i] || static_cast<int>(nbrs[i].size()) < min_samples) continue;
    const int id = next++;
    std::deque<int> frontier{i};
    visited[i] = 1;
    label[i] = id;
    while (!frontier.empty()) {
      const int u = frontier.front();
      frontier.pop_front();
      if (static_cast<int>(nbrs[u].size()) < min_samples) continue;  // border: no expansion
      for (int v : nbrs[u]) {
        if (label[v] == kNoise) label[v] = id;
        if (!visited[v]) {
          visited[v] = 1;
          frontier.push_back(v);
        }
      }
    }
  }
  return label;
}

int cluster_count(const std::vector<int>& labels) {
  std::set<int> ids;
  for (int l : labels)
    if (l != kNoise) ids.insert(l);
  return static_cast<int>(ids.size());
}

double silhouette_score(const Eigen::MatrixXd& points, const std::vector<int>& labels) {
  std::map<int, std::vector<int>> members;
  for (int i = 0; i < static_cast<int>(labels.size()); ++i)
    if (labels[i] != kNoise) members[labels[i]].push_back(i);
  if (members.size() < 2) return 0.0;
  double total = 0.0;
  int counted = 0;
  for (const auto& [id, own] : members) {
    for (int i : own) {
      if (own.size() < 2) {
        ++counted;  // singleton clusters score 0
        continue;
      }
      double a = 0.0;
      for (int j : own)
        if (j != i) a += (points.row(i) - points.row(j)).norm();
      a /= static_cast<double>(own.size() - 1);
      double b = std::numeric_limits<double>::infinity();
      for (const auto& [other, them] : members) {
        if (other == id) continue;
        double s = 0.0;
        for (int j : them) s += (points.row(i) - points.row(j)).norm();
        b = std::min(b, s / static_cast<double>(them.size()));
      }
      total += (b - a) / std::max(a, b);
      ++counted;
    }
  }
  return counted ? total / counted : 0.0;
}

}  // namespace kpnet
