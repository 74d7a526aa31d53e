#include "kpnet/viewpoint_search.hpp"

#include "kpnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace kpnet {

BinRenderCache::BinRenderCache(const PointMatrix& points, const CameraRig& rig, double radius, double distance,
                               unsigned threads)
    : rig_(rig), distance_(distance), renders_(kAzimuthBins * kElevationBins) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  const int total = kAzimuthBins * kElevationBins;
  auto work = [&](int begin) {
    for (int flat = begin; flat < total; flat += static_cast<int>(threads)) {
      ViewpointBin bin{flat % kAzimuthBins, flat / kAzimuthBins, true};
      renders_[static_cast<std::size_t>(flat)] = render_soft_silhouette(points, bin_center(bin, distance), rig, radius);
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(work, static_cast<int>(t));
  work(0);
  for (auto& t : pool) t.join();
}

CoarseResult coarse_bin_search(const SilhouetteImage& target, const BinRenderCache& cache) {
  if (target.width != cache.rig().width || target.height != cache.rig().height)
    throw Error(ErrorCode::InvalidConfig, "target silhouette does not match the camera rig");
  CoarseResult out;
  const int total = kAzimuthBins * kElevationBins;
  out.losses.resize(total);
  int best = 0;
  for (int flat = 0; flat < total; ++flat) {
    out.losses[flat] = silhouette_ssd(target, cache.at(flat));
    if (out.losses[flat] < out.losses[best]) best = flat;
  }
  out.bin = ViewpointBin{best % kAzimuthBins, best / kAzimuthBins, true};
  out.viewpoint = bin_center(out.bin, cache.distance());
  out.loss = out.losses[best];
  return out;
}

CoarseResult coarse_bin_search(const SilhouetteImage& target, const PointMatrix& points, const CameraRig& rig,
                               double radius) {
  return coarse_bin_search(target, BinRenderCache(points, rig, radius));
}

void FinetuneOptions::validate() const {
  if (steps < 0) throw Error(ErrorCode::InvalidConfig, "finetune.steps must be non-negative");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidConfig, "finetune.learning_rate must be positive");
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidConfig, "splat radius must be positive");
}

FinetuneResult finetune_viewpoint(const SilhouetteImage& target, const PointMatrix& points, const CameraRig& rig,
                                  const Viewpoint& init, const FinetuneOptions& options) {
  options.validate();
  FinetuneResult out;
  out.viewpoint = init;
  auto current = silhouette_pose_loss(target, points, init, rig, options.radius, options.steps > 0);
  out.initial_loss = out.loss = current.loss;
  double lr = options.learning_rate;
  for (int step = 0; step < options.steps; ++step) {
    const double norm = std::hypot(current.d_azimuth, current.d_elevation);
    if (!(norm > 0.0)) break;
    Viewpoint trial = out.viewpoint;
    trial.azimuth -= lr * current.d_azimuth / norm;
    trial.elevation -= lr * current.d_elevation / norm;
    trial = trial.normalized();
    const auto next = silhouette_pose_loss(target, points, trial, rig, options.radius, true);
    if (next.loss < current.loss) {
      out.viewpoint = trial;
      out.loss = next.loss;
      out.accepted.push_back(next.loss);
      current = next;
    } else {
      ++out.rejected;
      lr *= 0.5;
    }
  }
  return out;
}

}  // namespace kpnet
