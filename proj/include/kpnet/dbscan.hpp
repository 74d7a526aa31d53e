#pragma once

#include <Eigen/Core>

#include <vector>

namespace kpnet {

inline constexpr int kNoise = -1;

/// Density-based clustering. Rows of `points` are observations (any small
/// dimension). A point is core when at least `min_samples` points (itself
/// included) lie within distance `eps`. Cluster ids follow the order in
/// which core points are first met scanning ascending indices; border points
/// join the first cluster that reaches them; everything else is kNoise.
std::vector<int> dbscan_labels(const Eigen::MatrixXd& points, double eps, int min_samples);

int cluster_count(const std::vector<int>& labels);

/// Mean silhouette coefficient over non-noise points of clusters with at
/// least two members (0 when fewer than two clusters).
double silhouette_score(const Eigen::MatrixXd& points, const std::vector<int>& labels);

}  // namespace kpnet
