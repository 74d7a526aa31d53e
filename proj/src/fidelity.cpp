#include "kpnet/fidelity.hpp"

#include "kpnet/cloud_ops.hpp"
#include "kpnet/error.hpp"

#include <algorithm>
#include <limits>

namespace kpnet {

FidelityEngine::FidelityEngine(std::vector<const PointMatrix*> clouds, std::vector<Eigen::MatrixXd> fields,
                               std::vector<AnnotatorVertices> annotations, double sigma)
    : clouds_(std::move(clouds)), fields_(std::move(fields)), annotations_(std::move(annotations)) {
  const std::size_t models = clouds_.size();
  transfer_cost_.resize(models);
  for (std::size_t m = 0; m < models; ++m) {
    const auto& cloud = *clouds_[m];
    const auto& g = fields_[m];
    const Eigen::VectorXd g_sq = g.rowwise().squaredNorm();
    const auto n = static_cast<std::size_t>(cloud.rows());
    auto& cost = transfer_cost_[m];
    cost.assign(n, 0.0);

    for (const auto& labels : annotations_[m]) {
      if (labels.empty()) continue;
      // saliency moments per annotated keypoint
      const auto k = static_cast<Eigen::Index>(labels.size());
      Eigen::MatrixXd mean(k, g.cols());
      Eigen::VectorXd mean_sq(k);
      Eigen::MatrixXd label_emb(k, g.cols());
      for (Eigen::Index t = 0; t < k; ++t) {
        const auto sal = saliency_weights(cloud, cloud.row(labels[t]).transpose(), sigma);
        mean.row(t) = sal.weights.transpose() * g;
        mean_sq[t] = sal.weights.dot(g_sq);
        label_emb.row(t) = g.row(labels[t]);
      }
      const Eigen::VectorXd label_sq = label_emb.rowwise().squaredNorm();
      const Eigen::MatrixXd cross = g * label_emb.transpose();  // n x k
      const Eigen::MatrixXd mean_cross = g * mean.transpose();  // n x k
      for (std::size_t y = 0; y < n; ++y) {
        // annotator keypoint nearest to y in embedding space
        Eigen::Index best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index t = 0; t < k; ++t) {
          const double d = label_sq[t] - 2.0 * cross(y, t);
          if (d < best_d) {
            best_d = d;
            best = t;
          }
        }
        const double f = mean_sq[best] - 2.0 * mean_cross(y, best) + g_sq[y];
        cost[y] += std::max(f, 0.0);
      }
    }
  }
}

std::vector<int> FidelityEngine::correspondences(std::size_t from, std::size_t to) const {
  const auto& a = fields_[from];
  const auto& b = fields_[to];
  const Eigen::RowVectorXd b_sq = b.rowwise().squaredNorm().transpose();
  std::vector<int> out(static_cast<std::size_t>(a.rows()));
  constexpr Eigen::Index kBlock = 256;
  for (Eigen::Index start = 0; start < a.rows(); start += kBlock) {
    const Eigen::Index len = std::min(kBlock, a.rows() - start);
    const Eigen::MatrixXd d = (-2.0 * a.middleRows(start, len) * b.transpose()).rowwise() + b_sq;
    for (Eigen::Index r = 0; r < len; ++r) {
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < d.cols(); ++c)
        if (d(r, c) < d(r, best)) best = c;
      out[static_cast<std::size_t>(start + r)] = static_cast<int>(best);
    }
  }
  return out;
}

FidelityMap FidelityEngine::map(std::size_t m) const {
  if (model_count() < 2) throw Error(ErrorCode::InsufficientModels, "fidelity needs at least two models");
  FidelityMap out;
  out.values.assign(static_cast<std::size_t>(clouds_[m]->rows()), 0.0);
  for (std::size_t other = 0; other < model_count(); ++other) {
    if (other == m) continue;
    const auto corr = correspondences(m, other);
    for (std::size_t y = 0; y < corr.size(); ++y) out.values[y] += transfer_cost_[other][corr[y]];
  }
  return out;
}

FidelityMap fidelity_map(std::size_t m, std::span<const ModelCloud> clouds, std::span<const RawAnnotationSet> annotations,
                         const EmbeddingNet& net, double sigma) {
  if (clouds.size() < 2) throw Error(ErrorCode::InsufficientModels, "fidelity needs at least two models");
  std::vector<const PointMatrix*> pts;
  std::vector<Eigen::MatrixXd> fields;
  std::vector<AnnotatorVertices> labels;
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    pts.push_back(&clouds[i].points);
    fields.push_back(net.forward(clouds[i]));
    labels.push_back(snap_annotations(clouds[i], annotations[i]));
  }
  return FidelityEngine(std::move(pts), std::move(fields), std::move(labels), sigma).map(m);
}

}  // namespace kpnet
