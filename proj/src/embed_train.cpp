#include "kpnet/embed_train.hpp"

#include "kpnet/error.hpp"
#include "kpnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

namespace kpnet {

namespace {

/// Samples grouped by cloud, preserving sample order within each cloud.
std::map<int, std::vector<int>> group_by_cloud(std::span<const LabeledPoint> samples) {
  std::map<int, std::vector<int>> groups;
  for (int i = 0; i < static_cast<int>(samples.size()); ++i) groups[samples[i].cloud].push_back(i);
  return groups;
}

/// Embeddings of every sample (row i = samples[i]) plus the workspaces needed
/// to backpropagate through them.
struct BatchForward {
  std::vector<std::unique_ptr<NetWorkspace>> spaces;
  std::vector<std::vector<int>> members;  // sample ids per workspace
  Eigen::MatrixXd embeddings;

  BatchForward(const EmbeddingNet& net, std::span<const PointMatrix> clouds, std::span<const LabeledPoint> samples) {
    embeddings.resize(static_cast<Eigen::Index>(samples.size()), net.shape().embedding);
    for (auto& [cloud, ids] : group_by_cloud(samples)) {
      spaces.push_back(std::make_unique<NetWorkspace>(net, clouds[cloud]));
      std::vector<int> rows;
      for (int id : ids) rows.push_back(samples[id].point);
      const auto& e = spaces.back()->embed(rows);
      for (std::size_t t = 0; t < ids.size(); ++t) embeddings.row(ids[t]) = e.row(static_cast<Eigen::Index>(t));
      members.push_back(ids);
    }
  }

  void backward(const Eigen::MatrixXd& d_emb, Eigen::VectorXd& grad) const {
    for (std::size_t s = 0; s < spaces.size(); ++s) {
      Eigen::MatrixXd d(static_cast<Eigen::Index>(members[s].size()), d_emb.cols());
      for (std::size_t t = 0; t < members[s].size(); ++t) d.row(static_cast<Eigen::Index>(t)) = d_emb.row(members[s][t]);
      spaces[s]->backward(d, grad);
    }
  }
};

Eigen::MatrixXd head_logits(const EmbeddingNet& net, const Eigen::MatrixXd& emb) {
  const auto& s = net.shape();
  const auto lay = net.layout();
  EmbeddingNet::ConstMap wc(net.params().data() + lay.wc, s.classes, s.embedding);
  EmbeddingNet::ConstVecMap bc(net.params().data() + lay.bc, s.classes);
  return (emb * wc.transpose()).rowwise() + bc.transpose();
}

std::vector<PointMatrix> jitter(std::span<const PointMatrix> clouds, double sigma, Rng& rng) {
  std::vector<PointMatrix> out(clouds.begin(), clouds.end());
  if (sigma <= 0.0) return out;
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& c : out)
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] += noise(rng);
  return out;
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "learning rate must be positive");
  if (!(margin >= 0.0)) throw Error(ErrorCode::InvalidConfig, "margin must be non-negative");
  if (epochs < 0) throw Error(ErrorCode::InvalidConfig, "epochs must be non-negative");
  if (batch_models < 1) throw Error(ErrorCode::InvalidConfig, "batch must hold at least one model");
  if (noise_sigma < 0.0) throw Error(ErrorCode::InvalidConfig, "noise sigma must be non-negative");
  if (shape.embedding != kEmbeddingWidth) throw Error(ErrorCode::InvalidConfig, "embedding width must be 128");
}

double classification_loss(const EmbeddingNet& net, std::span<const PointMatrix> clouds,
                           std::span<const LabeledPoint> samples, Eigen::VectorXd* grad) {
  if (net.shape().classes < 1) throw std::invalid_argument("classification_loss: net has no classification head");
  if (grad) *grad = Eigen::VectorXd::Zero(net.params().size());
  if (samples.empty()) return 0.0;

  BatchForward fwd(net, clouds, samples);
  const Eigen::MatrixXd logits = head_logits(net, fwd.embeddings);
  const auto n = static_cast<double>(samples.size());

  Eigen::MatrixXd prob(logits.rows(), logits.cols());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd ex = (logits.row(i).array() - top).exp().matrix();
    const double z = ex.sum();
    prob.row(i) = ex / z;
    loss += -(logits(i, samples[i].label) - top - std::log(z));
  }
  loss /= n;

  if (grad) {
    Eigen::MatrixXd dlogits = prob;
    for (Eigen::Index i = 0; i < dlogits.rows(); ++i) dlogits(i, samples[i].label) -= 1.0;
    dlogits /= n;
    const auto& s = net.shape();
    const auto lay = net.layout();
    EmbeddingNet::Map gwc(grad->data() + lay.wc, s.classes, s.embedding);
    EmbeddingNet::VecMap gbc(grad->data() + lay.bc, s.classes);
    gwc.noalias() += dlogits.transpose() * fwd.embeddings;
    gbc += dlogits.colwise().sum().transpose();
    EmbeddingNet::ConstMap wc(net.params().data() + lay.wc, s.classes, s.embedding);
    fwd.backward(dlogits * wc, *grad);
  }
  return loss;
}

double classification_accuracy(const EmbeddingNet& net, std::span<const PointMatrix> clouds,
                               std::span<const LabeledPoint> samples) {
  if (samples.empty()) return 1.0;
  BatchForward fwd(net, clouds, samples);
  const Eigen::MatrixXd logits = head_logits(net, fwd.embeddings);
  int correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    correct += best == samples[i].label;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

ContrastiveLoss contrastive_loss(const EmbeddingNet& net, std::span<const PointMatrix> clouds,
                                 std::span<const LabeledPoint> samples, double margin, Eigen::VectorXd* grad) {
  if (grad) *grad = Eigen::VectorXd::Zero(net.params().size());
  ContrastiveLoss out;
  if (samples.empty()) return out;

  BatchForward fwd(net, clouds, samples);
  const Eigen::MatrixXd& e = fwd.embeddings;
  const auto n = static_cast<int>(samples.size());
  Eigen::MatrixXd d_emb = Eigen::MatrixXd::Zero(n, e.cols());
  const double margin_sq = margin * margin;

  long positives = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      if (a != b && samples[a].label == samples[b].label && samples[a].cloud != samples[b].cloud) ++positives;

  std::vector<int> hardest(n, -1);
  long anchors = 0;
  for (int a = 0; a < n; ++a) {
    double best = std::numeric_limits<double>::infinity();
    for (int b = 0; b < n; ++b) {
      if (samples[b].label == samples[a].label) continue;
      const double d = (e.row(a) - e.row(b)).squaredNorm();
      if (d < best) {
        best = d;
        hardest[a] = b;
      }
    }
    anchors += hardest[a] >= 0;
  }

  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (a == b || samples[a].label != samples[b].label || samples[a].cloud == samples[b].cloud) continue;
      const Eigen::RowVectorXd diff = e.row(a) - e.row(b);
      out.positive += diff.squaredNorm() / positives;
      d_emb.row(a) += 2.0 * diff / positives;
      d_emb.row(b) -= 2.0 * diff / positives;
    }
    const int h = hardest[a];
    if (h < 0) continue;
    const Eigen::RowVectorXd diff = e.row(a) - e.row(h);
    const double d = diff.squaredNorm();
    if (d <= margin_sq) {  // one-sided derivative from below at the kink
      out.negative += d / anchors;
      d_emb.row(a) -= 2.0 * diff / anchors;
      d_emb.row(h) += 2.0 * diff / anchors;
    } else {
      out.negative += margin_sq / anchors;
    }
  }

  if (grad) fwd.backward(d_emb, *grad);
  return out;
}

TrainResult train_gtheta(std::span<const PointMatrix> clouds, std::span<const LabeledPoint> samples,
                         const TrainConfig& cfg) {
  cfg.validate();
  std::set<int> labels;
  for (const auto& s : samples) labels.insert(s.label);
  if (labels.size() < 2) throw Error(ErrorCode::DegenerateLabels, "classification needs at least two classes");
  if (*labels.begin() != 0 || *labels.rbegin() != static_cast<int>(labels.size()) - 1)
    throw Error(ErrorCode::DegenerateLabels, "class labels must be dense 0..K-1");

  NetShape shape = cfg.shape;
  shape.classes = static_cast<int>(labels.size());
  Rng rng(cfg.seed);
  TrainResult result{EmbeddingNet::random(shape, rng()), {}, 0.0};
  Adam adam;
  adam.lr = cfg.learning_rate;

  const auto groups = group_by_cloud(samples);
  std::vector<int> order;
  for (const auto& [cloud, ids] : groups) order.push_back(cloud);

  Eigen::VectorXd grad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_models) {
      std::vector<LabeledPoint> batch;
      for (std::size_t t = start; t < std::min(order.size(), start + cfg.batch_models); ++t)
        for (int id : groups.at(order[t])) batch.push_back(samples[id]);
      const double loss = classification_loss(result.net, clouds, batch, &grad);
      total += loss * static_cast<double>(batch.size());
      adam.step(result.net.params(), grad);
    }
    result.loss_history.push_back(total / static_cast<double>(samples.size()));
  }
  result.train_accuracy = classification_accuracy(result.net, clouds, samples);
  return result;
}

TrainResult train_contrastive(std::span<const PointMatrix> clouds, std::span<const AggregatedKeypointSet> sets,
                              const TrainConfig& cfg) {
  cfg.validate();
  if (clouds.size() != sets.size()) throw std::invalid_argument("train_contrastive: clouds and sets differ in length");

  std::map<int, int> models_per_index;
  for (const auto& set : sets) {
    std::set<int> seen;
    for (const auto& k : set.keypoints) seen.insert(k.semantic_index);
    for (int s : seen) ++models_per_index[s];
  }
  int shared = 0;
  for (const auto& [idx, count] : models_per_index) shared += count >= 2;
  if (shared == 0) throw Error(ErrorCode::NoPositivePairs, "no semantic index is shared by two models");

  NetShape shape = cfg.shape;
  shape.classes = 0;
  Rng rng(cfg.seed);
  TrainResult result{EmbeddingNet::random(shape, rng()), {}, 0.0};
  Adam adam;
  adam.lr = cfg.learning_rate;

  std::vector<int> order(sets.size());
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd grad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    const auto noisy = jitter(clouds, cfg.noise_sigma, rng);
    double total = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_models) {
      std::vector<LabeledPoint> batch;
      for (std::size_t t = start; t < std::min(order.size(), start + cfg.batch_models); ++t)
        for (const auto& k : sets[order[t]].keypoints) batch.push_back({order[t], k.point_index, k.semantic_index});
      const auto loss = contrastive_loss(result.net, noisy, batch, cfg.margin, &grad);
      total += loss.total();
      ++batches;
      adam.step(result.net.params(), grad);
    }
    result.loss_history.push_back(batches ? total / batches : 0.0);
  }
  return result;
}

TripletStats triplet_separation(const EmbeddingNet& net, std::span<const PointMatrix> clouds,
                                std::span<const AggregatedKeypointSet> sets) {
  std::vector<LabeledPoint> all;
  for (std::size_t m = 0; m < sets.size(); ++m)
    for (const auto& k : sets[m].keypoints) all.push_back({static_cast<int>(m), k.point_index, k.semantic_index});
  TripletStats stats;
  if (all.empty()) return stats;
  BatchForward fwd(net, clouds, all);
  const auto& e = fwd.embeddings;
  const auto n = static_cast<int>(all.size());
  for (int a = 0; a < n; ++a) {
    double hardest = std::numeric_limits<double>::infinity();
    for (int b = 0; b < n; ++b)
      if (all[b].label != all[a].label) hardest = std::min(hardest, (e.row(a) - e.row(b)).squaredNorm());
    for (int p = 0; p < n; ++p) {
      if (p == a || all[p].label != all[a].label || all[p].cloud == all[a].cloud) continue;
      ++stats.triplets;
      stats.satisfied += (e.row(a) - e.row(p)).squaredNorm() < hardest;
    }
  }
  return stats;
}

GradCheckResult gradient_check(const EmbeddingNet& net, const LossFn& loss, double step) {
  Eigen::VectorXd analytic;
  loss(net, &analytic);
  EmbeddingNet probe = net;
  GradCheckResult r;
  for (Eigen::Index i = 0; i < probe.params().size(); ++i) {
    const double keep = probe.params()[i];
    probe.params()[i] = keep + step;
    const double up = loss(probe, nullptr);
    probe.params()[i] = keep - step;
    const double down = loss(probe, nullptr);
    probe.params()[i] = keep;
    const double numeric = (up - down) / (2.0 * step);
    const double rel = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-8);
    if (i == 0 || rel > r.max_relative_error) {
      r.max_relative_error = rel;
      r.worst_parameter = static_cast<std::size_t>(i);
      r.analytic = analytic[i];
      r.numeric = numeric;
    }
  }
  return r;
}

int nearest_embedding(const Eigen::MatrixXd& field, const Eigen::RowVectorXd& query) {
  const Eigen::VectorXd d = (field.rowwise() - query).rowwise().squaredNorm();
  int best = 0;
  for (int i = 1; i < static_cast<int>(d.size()); ++i)
    if (d[i] < d[best]) best = i;
  return best;
}

int corresponding_point(const EmbeddingNet& net, const ModelCloud& source, int index, const ModelCloud& target) {
  const Eigen::MatrixXd src = net.forward(source);
  const Eigen::MatrixXd dst = &source == &target ? src : net.forward(target);
  return nearest_embedding(dst, src.row(index));
}

}  // namespace kpnet
