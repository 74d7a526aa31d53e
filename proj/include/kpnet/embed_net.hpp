#pragma once

#include "kpnet/types.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace kpnet {

inline constexpr int kEmbeddingWidth = 128;

/// Layer widths of the pointwise network:
///   xyz -> hidden (tanh) ; max-pool over the cloud gives a global context
///   [hidden ; context] -> mid (tanh) -> embedding (linear) [-> classes]
struct NetShape {
  int input = 3;
  int hidden = 64;
  int mid = 128;
  int embedding = kEmbeddingWidth;
  int classes = 0;  // 0 disables the classification head

  std::size_t parameter_count() const;
  friend bool operator==(const NetShape&, const NetShape&) = default;
};

class EmbeddingNet {
 public:
  EmbeddingNet() = default;
  EmbeddingNet(NetShape shape, Eigen::VectorXd params);

  static EmbeddingNet zeros(NetShape shape);
  /// Glorot-uniform weights, zero biases.
  static EmbeddingNet random(NetShape shape, std::uint64_t seed);

  const NetShape& shape() const { return shape_; }
  const Eigen::VectorXd& params() const { return params_; }
  Eigen::VectorXd& params() { return params_; }

  /// One embedding row per input point.
  Eigen::MatrixXd forward(const PointMatrix& points) const;
  Eigen::MatrixXd forward(const ModelCloud& cloud) const { return forward(cloud.points); }

  // Parameter blocks (column-major views into params()).
  using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
  using Map = Eigen::Map<Eigen::MatrixXd>;
  using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
  using VecMap = Eigen::Map<Eigen::VectorXd>;

  struct Layout {
    std::size_t w1, b1, w2, b2, w3, b3, wc, bc, total;
  };
  Layout layout() const;

  friend bool operator==(const EmbeddingNet& a, const EmbeddingNet& b) {
    return a.shape_ == b.shape_ && a.params_ == b.params_;
  }

 private:
  friend class NetWorkspace;
  NetShape shape_{};
  Eigen::VectorXd params_;
};

/// Forward cache for one cloud plus backward accumulation into a gradient.
/// Embeddings are produced only for the requested rows; the max-pooled
/// context is taken over all points of the cloud.
class NetWorkspace {
 public:
  NetWorkspace(const EmbeddingNet& net, const PointMatrix& points);

  /// Embeddings of `rows` (|rows| x embedding).
  const Eigen::MatrixXd& embed(std::span<const int> rows);

  /// Accumulates d(loss)/d(params) given d(loss)/d(embedding) for the rows
  /// passed to the last embed() call.
  void backward(const Eigen::MatrixXd& d_embedding, Eigen::VectorXd& grad) const;

 private:
  const EmbeddingNet& net_;
  const PointMatrix& points_;
  Eigen::MatrixXd a1_;                    // N x hidden
  Eigen::VectorXd context_;               // hidden
  std::vector<int> argmax_;               // hidden
  std::vector<int> rows_;
  Eigen::MatrixXd a2_;                    // |rows| x mid
  Eigen::MatrixXd emb_;                   // |rows| x embedding
};

/// Adaptive-moment optimizer state.
struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long t = 0;

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
};

/// Squared embedding distance between two points of the embedding field.
inline double embedding_distance(const Eigen::MatrixXd& field_a, int a, const Eigen::MatrixXd& field_b, int b) {
  return (field_a.row(a) - field_b.row(b)).squaredNorm();
}

nlohmann::json checkpoint_to_json(const EmbeddingNet& net, const nlohmann::json& metadata = {});
EmbeddingNet checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const EmbeddingNet& net, const nlohmann::json& metadata = {});
EmbeddingNet load_checkpoint(const std::filesystem::path& path);

}  // namespace kpnet
