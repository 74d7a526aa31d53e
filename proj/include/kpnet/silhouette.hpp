#pragma once

#include "kpnet/camera.hpp"

#include <Eigen/Core>

namespace kpnet {

inline constexpr double kDefaultSplatRadius = 2.0;  // pixels
inline constexpr double kSplatCutoff = 6.0;         // splats are evaluated within this many radii

struct SilhouetteImage {
  int width = 0;
  int height = 0;
  Eigen::MatrixXd values;  // height x width, in [0, 1]

  static SilhouetteImage zeros(int width, int height);
  double mass() const { return values.sum(); }
};

/// S(p) = 1 - prod_i (1 - exp(-|p - proj(x_i)|^2 / (2 r^2))) over points in
/// front of the camera.
SilhouetteImage render_soft_silhouette(const PointMatrix& points, const Viewpoint& v, const CameraRig& rig,
                                       double radius = kDefaultSplatRadius);

/// Sum of squared pixel differences.
double silhouette_ssd(const SilhouetteImage& a, const SilhouetteImage& b);

struct PoseLoss {
  double loss = 0.0;
  double d_azimuth = 0.0;
  double d_elevation = 0.0;
};

/// L(v) = sum_p (target[p] - S_v[p])^2 and, when requested, its analytic
/// gradient with respect to azimuth and elevation.
PoseLoss silhouette_pose_loss(const SilhouetteImage& target, const PointMatrix& points, const Viewpoint& v,
                              const CameraRig& rig, double radius = kDefaultSplatRadius, bool gradient = true);

}  // namespace kpnet
