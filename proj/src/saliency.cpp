#include "kpnet/saliency.hpp"

#include <cmath>
#include <stdexcept>

namespace kpnet {

SaliencyField saliency_weights(const PointMatrix& cloud, const Vec3& annotated, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("saliency_weights: sigma must be positive");
  SaliencyField f;
  f.sigma = sigma;
  const Eigen::VectorXd sq = (cloud.rowwise() - annotated.transpose()).rowwise().squaredNorm();
  f.weights = (-sq.array() / (2.0 * sigma * sigma)).exp().matrix();
  f.normalizer = f.weights.sum();
  f.weights /= f.normalizer;
  return f;
}

}  // namespace kpnet
