#include "kpnet/transfer.hpp"

#include "kpnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kpnet {

int EmbeddingImage::covered() const { return static_cast<int>(std::count(mask.begin(), mask.end(), 1)); }

double splat_footprint(double radius) { return radius * std::sqrt(2.0 * std::log(2.0)); }

namespace {

struct ZBuffer {
  std::vector<int> source;
  std::vector<double> depth;
};

ZBuffer zbuffer(const Projection& proj, const CameraRig& rig, double radius) {
  const double reach = splat_footprint(radius);
  ZBuffer z;
  const std::size_t pixels = static_cast<std::size_t>(rig.width) * rig.height;
  z.source.assign(pixels, -1);
  z.depth.assign(pixels, std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < proj.pixels.rows(); ++i) {
    if (!proj.in_front[static_cast<std::size_t>(i)]) continue;
    const double u = proj.pixels(i, 0), v = proj.pixels(i, 1), d = proj.depth[i];
    const int c0 = std::max(0, static_cast<int>(std::ceil(u - reach)));
    const int c1 = std::min(rig.width - 1, static_cast<int>(std::floor(u + reach)));
    const int r0 = std::max(0, static_cast<int>(std::ceil(v - reach)));
    const int r1 = std::min(rig.height - 1, static_cast<int>(std::floor(v + reach)));
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c) {
        if ((c - u) * (c - u) + (r - v) * (r - v) > reach * reach) continue;
        const std::size_t px = static_cast<std::size_t>(r) * rig.width + c;
        const double held = z.depth[px];
        // points arrive in index order, so a tie never displaces the holder
        if (d < held - kDepthTieTolerance) {
          z.depth[px] = d;
          z.source[px] = static_cast<int>(i);
        }
      }
  }
  return z;
}

}  // namespace

EmbeddingImage transfer_embeddings_to_image(const PointMatrix& points, const Eigen::MatrixXd& embeddings,
                                            const Viewpoint& v, const CameraRig& rig, double radius) {
  if (embeddings.rows() != points.rows())
    throw Error(ErrorCode::InvalidConfig, "one embedding row per point is required");
  const auto proj = project_points(points, v, rig);
  auto z = zbuffer(proj, rig, radius);
  EmbeddingImage img;
  img.width = rig.width;
  img.height = rig.height;
  const std::size_t pixels = z.source.size();
  img.embeddings = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(pixels), embeddings.cols());
  img.mask.assign(pixels, 0);
  img.depth.assign(pixels, 0.0);
  for (std::size_t px = 0; px < pixels; ++px) {
    if (z.source[px] < 0) continue;
    img.mask[px] = 1;
    img.depth[px] = z.depth[px];
    img.embeddings.row(static_cast<Eigen::Index>(px)) = embeddings.row(z.source[px]);
  }
  img.source = std::move(z.source);
  return img;
}

std::vector<char> visible_points(const PointMatrix& points, const Viewpoint& v, const CameraRig& rig, double radius,
                                 double tolerance) {
  const auto proj = project_points(points, v, rig);
  const auto z = zbuffer(proj, rig, radius);
  std::vector<char> out(static_cast<std::size_t>(points.rows()), 0);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (!proj.in_front[static_cast<std::size_t>(i)]) continue;
    const int c = static_cast<int>(std::lround(proj.pixels(i, 0)));
    const int r = static_cast<int>(std::lround(proj.pixels(i, 1)));
    if (c < 0 || r < 0 || c >= rig.width || r >= rig.height) continue;
    const std::size_t px = static_cast<std::size_t>(r) * rig.width + c;
    out[static_cast<std::size_t>(i)] = proj.depth[i] <= z.depth[px] + tolerance;
  }
  return out;
}

int nearest_pixel(const EmbeddingImage& image, const Eigen::RowVectorXd& query) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t px = 0; px < image.mask.size(); ++px) {
    if (!image.mask[px]) continue;
    const double d = (image.embeddings.row(static_cast<Eigen::Index>(px)) - query).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(px);
    }
  }
  return best;
}

}  // namespace kpnet
