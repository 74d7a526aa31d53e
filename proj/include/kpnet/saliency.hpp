#pragma once

#include "kpnet/types.hpp"

#include <Eigen/Core>

namespace kpnet {

inline constexpr double kAnnotationSigma = 0.03;

/// Discrete keypoint distribution induced by one annotated position:
/// weight_i = exp(-|l - x_i|^2 / (2 sigma^2)) / Z over the cloud samples.
struct SaliencyField {
  Eigen::VectorXd weights;
  double sigma = kAnnotationSigma;
  double normalizer = 1.0;  // Z, the sum of unnormalized weights
};

SaliencyField saliency_weights(const PointMatrix& cloud, const Vec3& annotated, double sigma = kAnnotationSigma);

}  // namespace kpnet
