#pragma once

#include "kpnet/silhouette.hpp"

#include <Eigen/Core>

#include <vector>

namespace kpnet {

inline constexpr double kDepthTieTolerance = 1e-6;
inline constexpr double kVisibilityTolerance = 0.05;  // world units

/// Per-pixel embeddings from z-buffered splats. A point covers the pixels
/// within its half-maximum footprint r * sqrt(2 ln 2); the nearest depth
/// wins, depths within 1e-6 resolve to the lower point index.
struct EmbeddingImage {
  int width = 0;
  int height = 0;
  Eigen::MatrixXd embeddings;  // (height * width) x D, row = row * width + col
  std::vector<char> mask;
  std::vector<int> source;     // covering point per pixel, -1 when empty
  std::vector<double> depth;

  int covered() const;
};

double splat_footprint(double radius = kDefaultSplatRadius);

EmbeddingImage transfer_embeddings_to_image(const PointMatrix& points, const Eigen::MatrixXd& embeddings,
                                            const Viewpoint& v, const CameraRig& rig,
                                            double radius = kDefaultSplatRadius);

/// Points whose depth is within `tolerance` of the z-buffer at their own
/// pixel (and that project inside the image in front of the camera).
std::vector<char> visible_points(const PointMatrix& points, const Viewpoint& v, const CameraRig& rig,
                                 double radius = kDefaultSplatRadius, double tolerance = kVisibilityTolerance);

/// Covered pixel whose embedding is nearest to `query` (lowest pixel index on
/// ties); -1 when nothing is covered.
int nearest_pixel(const EmbeddingImage& image, const Eigen::RowVectorXd& query);

}  // namespace kpnet
