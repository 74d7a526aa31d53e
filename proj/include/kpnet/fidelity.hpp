#pragma once

#include "kpnet/embed_net.hpp"
#include "kpnet/saliency.hpp"
#include "kpnet/types.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace kpnet {

/// Snapped annotation vertices of one model, one list per annotator.
using AnnotatorVertices = std::vector<std::vector<int>>;

struct FidelityMap {
  std::vector<double> values;  // one per cloud vertex
};

/// Evaluates the transferred fidelity loss
///   f(y) = sum_{m' != m} sum_c sum_x d(x, y_m') phi(l*_c, x) / Z
/// where y_m' is the embedding nearest neighbour of y on model m' and l*_c is
/// annotator c's keypoint on m' closest to y_m' in embedding space.
///
/// Per-annotation moments (saliency-weighted mean embedding and mean squared
/// norm) are precomputed so each term costs one dot product.
class FidelityEngine {
 public:
  FidelityEngine(std::vector<const PointMatrix*> clouds, std::vector<Eigen::MatrixXd> fields,
                 std::vector<AnnotatorVertices> annotations, double sigma = kAnnotationSigma);

  std::size_t model_count() const { return clouds_.size(); }
  const Eigen::MatrixXd& field(std::size_t m) const { return fields_[m]; }

  /// Per-vertex fidelity of model m. Throws InsufficientModels below two models.
  FidelityMap map(std::size_t m) const;

  /// Embedding nearest neighbour on model `to` for every vertex of model `from`.
  std::vector<int> correspondences(std::size_t from, std::size_t to) const;

  /// Sum over annotators of the saliency-weighted embedding distance between
  /// vertex y of model m and that annotator's embedding-nearest keypoint.
  double annotator_term(std::size_t m, int y) const { return transfer_cost_[m][y]; }

 private:
  std::vector<const PointMatrix*> clouds_;
  std::vector<Eigen::MatrixXd> fields_;
  std::vector<AnnotatorVertices> annotations_;
  std::vector<std::vector<double>> transfer_cost_;
};

/// Convenience wrapper: embeds every cloud with `net`, snaps annotations and
/// returns the fidelity map of model m.
FidelityMap fidelity_map(std::size_t m, std::span<const ModelCloud> clouds,
                         std::span<const RawAnnotationSet> annotations, const EmbeddingNet& net,
                         double sigma = kAnnotationSigma);

}  // namespace kpnet
