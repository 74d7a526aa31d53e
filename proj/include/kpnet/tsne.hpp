#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace kpnet {

struct TsneConfig {
  double perplexity = 30.0;
  std::uint64_t seed = 0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  // stopping rules, checked every `check_every` iterations per phase
  int check_every = 50;
  int iterations_without_progress = 300;
  double min_gradient_norm = 1e-7;
};

/// Default perplexity for N pooled candidates: min(30, floor(N / 4)).
double default_perplexity(int n);

/// Exact t-SNE to two dimensions. Rows of `data` are observations.
/// Throws PerplexityTooLarge when rows < 3 * perplexity.
Eigen::MatrixXd tsne_2d(const Eigen::MatrixXd& data, const TsneConfig& cfg);

/// Row-stochastic input affinities whose per-row entropy matches
/// log(perplexity); exposed for testing.
Eigen::MatrixXd conditional_affinities(const Eigen::MatrixXd& sq_distances, double perplexity);

}  // namespace kpnet
