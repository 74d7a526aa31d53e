#pragma once

#include "kpnet/silhouette.hpp"

#include <vector>

namespace kpnet {

/// Silhouettes of one cloud rendered at all 24 x 12 bin centres, indexed by
/// ViewpointBin::flat(). Rendering is split across threads.
class BinRenderCache {
 public:
  BinRenderCache(const PointMatrix& points, const CameraRig& rig, double radius = kDefaultSplatRadius,
                 double distance = kDefaultDistance, unsigned threads = 0);

  const SilhouetteImage& at(int flat) const { return renders_[static_cast<std::size_t>(flat)]; }
  const CameraRig& rig() const { return rig_; }
  double distance() const { return distance_; }

 private:
  CameraRig rig_;
  double distance_;
  std::vector<SilhouetteImage> renders_;
};

struct CoarseResult {
  ViewpointBin bin;
  Viewpoint viewpoint;         // bin centre
  double loss = 0.0;
  std::vector<double> losses;  // per bin, flat index
};

/// Exhaustive sum-of-squared-differences scoring over every bin centre;
/// ties go to the lowest (elevation, azimuth) bin.
CoarseResult coarse_bin_search(const SilhouetteImage& target, const BinRenderCache& cache);
CoarseResult coarse_bin_search(const SilhouetteImage& target, const PointMatrix& points, const CameraRig& rig,
                               double radius = kDefaultSplatRadius);

struct FinetuneOptions {
  int steps = 20;
  double learning_rate = 0.05;  // radians per step, halved after a rejected step
  double radius = kDefaultSplatRadius;

  void validate() const;
};

struct FinetuneResult {
  Viewpoint viewpoint;               // best iterate
  double initial_loss = 0.0;
  double loss = 0.0;                 // loss of the returned viewpoint
  std::vector<double> accepted;      // loss after each accepted step
  int rejected = 0;
};

/// Gradient descent on the silhouette loss over (azimuth, elevation). Each
/// step moves `learning_rate` radians along the negative gradient direction;
/// a step that does not lower the loss is rejected and the rate halved.
FinetuneResult finetune_viewpoint(const SilhouetteImage& target, const PointMatrix& points, const CameraRig& rig,
                                  const Viewpoint& init, const FinetuneOptions& options = {});

}  // namespace kpnet
