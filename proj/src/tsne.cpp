#include "kpnet/tsne.hpp"

#include "kpnet/error.hpp"
#include "kpnet/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace kpnet {

double default_perplexity(int n) { return std::min(30.0, std::floor(n / 4.0)); }

Eigen::MatrixXd conditional_affinities(const Eigen::MatrixXd& sq, double perplexity) {
  const Eigen::Index n = sq.rows();
  const double target = std::log(perplexity);
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd row(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    // shift by the nearest distance so exp() cannot underflow for every j
    double dmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, sq(i, j));
    for (int iter = 0; iter < 200; ++iter) {
      double sum = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-beta * (sq(i, j) - dmin));
        sum += row[j];
      }
      double weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) weighted += row[j] * (sq(i, j) - dmin);
      const double entropy = std::log(sum) + beta * weighted / sum;
      row /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = std::isinf(lo) ? beta / 2.0 : 0.5 * (beta + lo);
      }
    }
    p.row(i) = row.transpose();
  }
  return p;
}

Eigen::MatrixXd tsne_2d(const Eigen::MatrixXd& data, const TsneConfig& cfg) {
  const Eigen::Index n = data.rows();
  if (!(cfg.perplexity > 0.0) || n < 3.0 * cfg.perplexity)
    throw Error(ErrorCode::PerplexityTooLarge,
                "t-SNE needs at least 3 * perplexity rows (" + std::to_string(n) + " given)");

  const Eigen::VectorXd norms = data.rowwise().squaredNorm();
  Eigen::MatrixXd sq = (-2.0 * data * data.transpose()).colwise() + norms;
  sq.rowwise() += norms.transpose();
  sq = sq.cwiseMax(0.0);
  sq.diagonal().setZero();

  Eigen::MatrixXd p = conditional_affinities(sq, cfg.perplexity);
  // eval: p + p^T into p aliases
  p = (p + p.transpose()).eval() / (2.0 * static_cast<double>(n));
  p = p.cwiseMax(1e-12);
  p.diagonal().setZero();

  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1e-4);
  Eigen::MatrixXd y(n, 2);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = normal(rng);

  Eigen::MatrixXd update = Eigen::MatrixXd::Zero(n, 2);
  Eigen::MatrixXd gains = Eigen::MatrixXd::Ones(n, 2);
  Eigen::MatrixXd num(n, n);
  Eigen::MatrixXd grad(n, 2);
  constexpr double kTiny = std::numeric_limits<double>::epsilon();

  // two phases (exaggerated, then plain), each with its own progress tracking
  const int split = std::min(cfg.exaggeration_iterations, cfg.iterations);
  for (int phase = 0; phase < 2; ++phase) {
    const int begin = phase == 0 ? 0 : split;
    const int end = phase == 0 ? split : cfg.iterations;
    const double exaggeration = phase == 0 ? cfg.early_exaggeration : 1.0;
    const double momentum = phase == 0 ? cfg.initial_momentum : cfg.final_momentum;
    const Eigen::MatrixXd pe = exaggeration * p;
    double best_error = std::numeric_limits<double>::infinity();
    int best_iter = begin;

    for (int iter = begin; iter < end; ++iter) {
      const Eigen::VectorXd yn = y.rowwise().squaredNorm();
      num = (-2.0 * y * y.transpose()).colwise() + yn;
      num.rowwise() += yn.transpose();
      num = (1.0 + num.array()).inverse().matrix();
      num.diagonal().setZero();
      const double z = num.sum();

      // 4 sum_j (p_ij - q_ij) num_ij (y_i - y_j)
      const Eigen::MatrixXd w = (pe.array() - num.array() / z).matrix().cwiseProduct(num);
      const Eigen::VectorXd wsum = w.rowwise().sum();
      grad = 4.0 * (wsum.asDiagonal() * y - w * y);

      for (Eigen::Index i = 0; i < grad.size(); ++i) {
        double& g = gains.data()[i];
        g = update.data()[i] * grad.data()[i] < 0.0 ? g + 0.2 : std::max(g * 0.8, 0.01);
      }
      grad = grad.cwiseProduct(gains);
      update = momentum * update - cfg.learning_rate * grad;
      y += update;

      if ((iter + 1) % cfg.check_every != 0) continue;
      double kl = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) {
          if (i == j) continue;
          const double pij = std::max(pe(i, j), kTiny);
          kl += pij * std::log(pij / std::max(num(i, j) / z, kTiny));
        }
      if (kl < best_error) {
        best_error = kl;
        best_iter = iter;
      } else if (iter - best_iter > cfg.iterations_without_progress) {
        break;
      }
      if (grad.norm() <= cfg.min_gradient_norm) break;
    }
  }
  y.rowwise() -= y.colwise().mean();
  return y;
}

}  // namespace kpnet
