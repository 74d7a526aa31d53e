#pragma once

#include "kpnet/embed_net.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace kpnet {

struct TrainConfig {
  double learning_rate = 1e-3;
  int epochs = 200;
  int batch_models = 4;  // models per mini-batch
  std::uint64_t seed = 0;
  double margin = 1.0;               // contrastive margin
  double noise_sigma = 0.01;         // jitter applied to training clouds (contrastive)
  double lambda_consistency = 1.0;   // folded into the classifier; recorded for provenance
  NetShape shape{};                  // classes is filled in by train_gtheta

  void validate() const;
};

/// A labelled point: `point` indexes into clouds[cloud].
struct LabeledPoint {
  int cloud = 0;
  int point = 0;
  int label = 0;
};

/// Mean softmax cross-entropy of the classification head over `samples`.
/// When `grad` is non-null it receives d(loss)/d(params) (overwritten).
double classification_loss(const EmbeddingNet& net, std::span<const PointMatrix> clouds,
                            std::span<const LabeledPoint> samples, Eigen::VectorXd* grad = nullptr);

double classification_accuracy(const EmbeddingNet& net, std::span<const PointMatrix> clouds,
                               std::span<const LabeledPoint> samples);

struct ContrastiveLoss {
  double positive = 0.0;  // mean squared distance over ordered same-index cross-model pairs
  double negative = 0.0;  // mean min(d_hardest, margin)^2 over anchors
  double total() const { return positive - negative; }
};

/// Contrastive objective on one batch: `samples[i].label` is the semantic
/// index. Each anchor's negative term uses its hardest (closest) keypoint of
/// another semantic index in the batch.
ContrastiveLoss contrastive_loss(const EmbeddingNet& net, std::span<const PointMatrix> clouds,
                                 std::span<const LabeledPoint> samples, double margin,
                                 Eigen::VectorXd* grad = nullptr);

struct TrainResult {
  EmbeddingNet net;
  std::vector<double> loss_history;  // mean loss per epoch
  double train_accuracy = 0.0;       // classification only
};

/// Trains the aggregation embedding as a K-way point classifier; labels must
/// be dense 0..K-1. Throws DegenerateLabels for fewer than two classes.
TrainResult train_gtheta(std::span<const PointMatrix> clouds, std::span<const LabeledPoint> samples,
                         const TrainConfig& cfg);

/// Trains dense semantic embeddings from aggregated keypoints (clouds[i] pairs
/// with sets[i]). Throws NoPositivePairs when no semantic index is shared.
TrainResult train_contrastive(std::span<const PointMatrix> clouds, std::span<const AggregatedKeypointSet> sets,
                              const TrainConfig& cfg);

struct TripletStats {
  long triplets = 0;
  long satisfied = 0;
  double fraction() const { return triplets == 0 ? 1.0 : static_cast<double>(satisfied) / triplets; }
};

/// For every anchor keypoint and every same-index keypoint on another model,
/// checks d(anchor, positive) < d(anchor, hardest negative), where the
/// hardest negative is the closest keypoint of a different semantic index on
/// any model.
TripletStats triplet_separation(const EmbeddingNet& net, std::span<const PointMatrix> clouds,
                                std::span<const AggregatedKeypointSet> sets);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_parameter = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

using LossFn = std::function<double(const EmbeddingNet&, Eigen::VectorXd*)>;

/// Compares the analytic gradient against central differences, reporting
/// max |a - n| / (|a| + 1e-8) over all parameters.
GradCheckResult gradient_check(const EmbeddingNet& net, const LossFn& loss, double step = 1e-5);

/// Row of `field` closest to `query` in squared distance (lowest index on ties).
int nearest_embedding(const Eigen::MatrixXd& field, const Eigen::RowVectorXd& query);

/// Point on `target` whose embedding is closest to that of source[index].
int corresponding_point(const EmbeddingNet& net, const ModelCloud& source, int index, const ModelCloud& target);

}  // namespace kpnet
