#include "kpnet/embed_net.hpp"

#include "kpnet/error.hpp"
#include "kpnet/io.hpp"
#include "kpnet/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace kpnet {

std::size_t NetShape::parameter_count() const {
  const std::size_t h = hidden, m = mid, e = embedding, k = classes;
  return h * input + h + m * 2 * h + m + e * m + e + k * e + k;
}

EmbeddingNet::EmbeddingNet(NetShape shape, Eigen::VectorXd params) : shape_(shape), params_(std::move(params)) {
  if (static_cast<std::size_t>(params_.size()) != shape_.parameter_count())
    throw std::invalid_argument("EmbeddingNet: parameter vector does not match the shape");
}

EmbeddingNet EmbeddingNet::zeros(NetShape shape) {
  return {shape, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shape.parameter_count()))};
}

EmbeddingNet EmbeddingNet::random(NetShape shape, std::uint64_t seed) {
  EmbeddingNet net = zeros(shape);
  Rng rng(seed);
  const auto lay = net.layout();
  auto fill = [&](std::size_t offset, int rows, int cols) {
    const double limit = std::sqrt(6.0 / (rows + cols));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (std::size_t i = 0; i < static_cast<std::size_t>(rows) * cols; ++i) net.params_[offset + i] = u(rng);
  };
  fill(lay.w1, shape.hidden, shape.input);
  fill(lay.w2, shape.mid, 2 * shape.hidden);
  fill(lay.w3, shape.embedding, shape.mid);
  if (shape.classes > 0) fill(lay.wc, shape.classes, shape.embedding);
  return net;
}

EmbeddingNet::Layout EmbeddingNet::layout() const {
  const std::size_t h = shape_.hidden, m = shape_.mid, e = shape_.embedding, k = shape_.classes;
  Layout l{};
  l.w1 = 0;
  l.b1 = l.w1 + h * shape_.input;
  l.w2 = l.b1 + h;
  l.b2 = l.w2 + m * 2 * h;
  l.w3 = l.b2 + m;
  l.b3 = l.w3 + e * m;
  l.wc = l.b3 + e;
  l.bc = l.wc + k * e;
  l.total = l.bc + k;
  return l;
}

Eigen::MatrixXd EmbeddingNet::forward(const PointMatrix& points) const {
  NetWorkspace ws(*this, points);
  std::vector<int> rows(points.rows());
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) rows[i] = i;
  return ws.embed(rows);
}

NetWorkspace::NetWorkspace(const EmbeddingNet& net, const PointMatrix& points) : net_(net), points_(points) {
  const auto& s = net.shape();
  const auto lay = net.layout();
  const double* p = net.params().data();
  EmbeddingNet::ConstMap w1(p + lay.w1, s.hidden, s.input);
  EmbeddingNet::ConstVecMap b1(p + lay.b1, s.hidden);

  a1_ = ((points * w1.transpose()).rowwise() + b1.transpose()).array().tanh().matrix();
  context_.resize(s.hidden);
  argmax_.assign(s.hidden, 0);
  for (int c = 0; c < s.hidden; ++c) {
    int at = 0;
    for (int i = 1; i < static_cast<int>(a1_.rows()); ++i)
      if (a1_(i, c) > a1_(at, c)) at = i;
    context_[c] = a1_(at, c);
    argmax_[c] = at;
  }
}

const Eigen::MatrixXd& NetWorkspace::embed(std::span<const int> rows) {
  const auto& s = net_.shape();
  const auto lay = net_.layout();
  const double* p = net_.params().data();
  EmbeddingNet::ConstMap w2(p + lay.w2, s.mid, 2 * s.hidden);
  EmbeddingNet::ConstVecMap b2(p + lay.b2, s.mid);
  EmbeddingNet::ConstMap w3(p + lay.w3, s.embedding, s.mid);
  EmbeddingNet::ConstVecMap b3(p + lay.b3, s.embedding);

  rows_.assign(rows.begin(), rows.end());
  const auto n = static_cast<Eigen::Index>(rows_.size());
  Eigen::MatrixXd a1s(n, s.hidden);
  for (Eigen::Index i = 0; i < n; ++i) a1s.row(i) = a1_.row(rows_[i]);

  const Eigen::VectorXd ctx_term = w2.rightCols(s.hidden) * context_ + b2;
  a2_ = ((a1s * w2.leftCols(s.hidden).transpose()).rowwise() + ctx_term.transpose()).array().tanh().matrix();
  emb_ = (a2_ * w3.transpose()).rowwise() + b3.transpose();
  return emb_;
}

void NetWorkspace::backward(const Eigen::MatrixXd& d_emb, Eigen::VectorXd& grad) const {
  const auto& s = net_.shape();
  const auto lay = net_.layout();
  const double* p = net_.params().data();
  EmbeddingNet::ConstMap w2(p + lay.w2, s.mid, 2 * s.hidden);
  EmbeddingNet::ConstMap w3(p + lay.w3, s.embedding, s.mid);
  double* g = grad.data();
  EmbeddingNet::Map gw1(g + lay.w1, s.hidden, s.input);
  EmbeddingNet::VecMap gb1(g + lay.b1, s.hidden);
  EmbeddingNet::Map gw2(g + lay.w2, s.mid, 2 * s.hidden);
  EmbeddingNet::VecMap gb2(g + lay.b2, s.mid);
  EmbeddingNet::Map gw3(g + lay.w3, s.embedding, s.mid);
  EmbeddingNet::VecMap gb3(g + lay.b3, s.embedding);

  const auto n = static_cast<Eigen::Index>(rows_.size());
  gw3.noalias() += d_emb.transpose() * a2_;
  gb3 += d_emb.colwise().sum().transpose();

  const Eigen::MatrixXd dz2 = ((d_emb * w3).array() * (1.0 - a2_.array().square())).matrix();
  Eigen::MatrixXd a1s(n, s.hidden);
  for (Eigen::Index i = 0; i < n; ++i) a1s.row(i) = a1_.row(rows_[i]);
  const Eigen::VectorXd dz2_sum = dz2.colwise().sum().transpose();
  gw2.leftCols(s.hidden).noalias() += dz2.transpose() * a1s;
  gw2.rightCols(s.hidden).noalias() += dz2_sum * context_.transpose();
  gb2 += dz2_sum;

  // d a1 at the selected rows, plus the context gradient routed to argmax points
  Eigen::MatrixXd da1 = dz2 * w2.leftCols(s.hidden);
  const Eigen::VectorXd dctx = w2.rightCols(s.hidden).transpose() * dz2_sum;

  auto accumulate = [&](int point, const Eigen::RowVectorXd& da) {
    const Eigen::RowVectorXd dz1 = (da.array() * (1.0 - a1_.row(point).array().square())).matrix();
    gw1.noalias() += dz1.transpose() * points_.row(point);
    gb1 += dz1.transpose();
  };
  for (Eigen::Index i = 0; i < n; ++i) accumulate(rows_[i], da1.row(i));
  for (int c = 0; c < s.hidden; ++c) {
    if (dctx[c] == 0.0) continue;
    Eigen::RowVectorXd da = Eigen::RowVectorXd::Zero(s.hidden);
    da[c] = dctx[c];
    accumulate(argmax_[c], da);
  }
}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (m.size() != params.size()) {
    m = Eigen::VectorXd::Zero(params.size());
    v = Eigen::VectorXd::Zero(params.size());
    t = 0;
  }
  ++t;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
}

nlohmann::json checkpoint_to_json(const EmbeddingNet& net, const nlohmann::json& metadata) {
  const auto& s = net.shape();
  const auto& p = net.params();
  nlohmann::json j{{"widths", {s.input, s.hidden, s.mid, s.embedding}},
                   {"classes", s.classes},
                   {"params", encode_f64(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())))}};
  if (!metadata.is_null()) j["metadata"] = metadata;
  return j;
}

EmbeddingNet checkpoint_from_json(const nlohmann::json& j) {
  try {
    const auto w = j.at("widths").get<std::vector<int>>();
    if (w.size() != 4) throw Error(ErrorCode::SchemaError, "checkpoint needs four widths");
    NetShape shape{w[0], w[1], w[2], w[3], j.at("classes").get<int>()};
    const auto values = decode_f64(j.at("params").get<std::string>());
    if (values.size() != shape.parameter_count()) throw Error(ErrorCode::IoError, "checkpoint parameters truncated");
    return {shape, Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()))};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const EmbeddingNet& net, const nlohmann::json& metadata) {
  write_json(path, checkpoint_to_json(net, metadata));
}

EmbeddingNet load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_json(read_json(path)); }

}  // namespace kpnet
