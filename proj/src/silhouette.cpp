#include "kpnet/silhouette.hpp"

#include "kpnet/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace kpnet {

namespace {

// factors 1 - g below this are treated as exact zeros in the product
constexpr double kZeroFactor = 1e-12;

struct Window {
  int r0, r1, c0, c1;  // inclusive pixel ranges
  std::vector<double> ex, ey;
  bool empty() const { return r0 > r1 || c0 > c1; }
};

Window splat_window(double u, double v, double radius, int width, int height) {
  const double reach = kSplatCutoff * radius;
  Window w;
  w.c0 = std::max(0, static_cast<int>(std::ceil(u - reach)));
  w.c1 = std::min(width - 1, static_cast<int>(std::floor(u + reach)));
  w.r0 = std::max(0, static_cast<int>(std::ceil(v - reach)));
  w.r1 = std::min(height - 1, static_cast<int>(std::floor(v + reach)));
  if (w.empty()) return w;
  const double inv = 1.0 / (2.0 * radius * radius);
  for (int c = w.c0; c <= w.c1; ++c) w.ex.push_back(std::exp(-(c - u) * (c - u) * inv));
  for (int r = w.r0; r <= w.r1; ++r) w.ey.push_back(std::exp(-(r - v) * (r - v) * inv));
  return w;
}

}  // namespace

SilhouetteImage SilhouetteImage::zeros(int width, int height) {
  SilhouetteImage s;
  s.width = width;
  s.height = height;
  s.values = Eigen::MatrixXd::Zero(height, width);
  return s;
}

SilhouetteImage render_soft_silhouette(const PointMatrix& points, const Viewpoint& v, const CameraRig& rig,
                                       double radius) {
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidConfig, "splat radius must be positive");
  const auto proj = project_points(points, v, rig);
  Eigen::MatrixXd keep = Eigen::MatrixXd::Ones(rig.height, rig.width);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (!proj.in_front[static_cast<std::size_t>(i)]) continue;
    const auto w = splat_window(proj.pixels(i, 0), proj.pixels(i, 1), radius, rig.width, rig.height);
    if (w.empty()) continue;
    for (int r = w.r0; r <= w.r1; ++r) {
      const double gy = w.ey[r - w.r0];
      for (int c = w.c0; c <= w.c1; ++c) keep(r, c) *= 1.0 - gy * w.ex[c - w.c0];
    }
  }
  SilhouetteImage s;
  s.width = rig.width;
  s.height = rig.height;
  s.values = (1.0 - keep.array()).max(0.0).min(1.0).matrix();
  return s;
}

double silhouette_ssd(const SilhouetteImage& a, const SilhouetteImage& b) {
  if (a.width != b.width || a.height != b.height)
    throw Error(ErrorCode::InvalidConfig, "silhouette sizes differ");
  return (a.values - b.values).squaredNorm();
}

PoseLoss silhouette_pose_loss(const SilhouetteImage& target, const PointMatrix& points, const Viewpoint& v,
                              const CameraRig& rig, double radius, bool gradient) {
  if (!(radius > 0.0)) throw Error(ErrorCode::InvalidConfig, "splat radius must be positive");
  if (target.width != rig.width || target.height != rig.height)
    throw Error(ErrorCode::InvalidConfig, "target silhouette does not match the camera rig");
  const auto proj = project_points(points, v, rig);
  const Eigen::Index n = points.rows();

  // product of the non-zero factors and the count of zero factors per pixel
  Eigen::MatrixXd keep = Eigen::MatrixXd::Ones(rig.height, rig.width);
  Eigen::MatrixXi zeros = Eigen::MatrixXi::Zero(rig.height, rig.width);
  std::vector<Window> windows(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!proj.in_front[static_cast<std::size_t>(i)]) continue;
    auto& w = windows[static_cast<std::size_t>(i)];
    w = splat_window(proj.pixels(i, 0), proj.pixels(i, 1), radius, rig.width, rig.height);
    if (w.empty()) continue;
    for (int r = w.r0; r <= w.r1; ++r)
      for (int c = w.c0; c <= w.c1; ++c) {
        const double f = 1.0 - w.ey[r - w.r0] * w.ex[c - w.c0];
        if (f < kZeroFactor) ++zeros(r, c);
        else keep(r, c) *= f;
      }
  }
  const Eigen::MatrixXd rendered = (zeros.array() > 0).select(Eigen::MatrixXd::Ones(rig.height, rig.width),
                                                              (1.0 - keep.array()).max(0.0).min(1.0).matrix());
  PoseLoss out;
  out.loss = (target.values - rendered).squaredNorm();
  if (!gradient) return out;

  const Eigen::MatrixXd weight = -2.0 * (target.values - rendered);  // dL/dS
  const auto ext = viewpoint_to_camera(v);
  Eigen::Matrix3d dr_a, dr_e;
  rotation_derivatives(v, dr_a, dr_e);
  const double inv_r2 = 1.0 / (radius * radius);

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& w = windows[static_cast<std::size_t>(i)];
    if (!proj.in_front[static_cast<std::size_t>(i)] || w.empty()) continue;
    const double u = proj.pixels(i, 0), vv = proj.pixels(i, 1);
    // dL/du_i accumulated over the splat window
    double gu = 0.0, gv = 0.0;
    for (int r = w.r0; r <= w.r1; ++r)
      for (int c = w.c0; c <= w.c1; ++c) {
        const double g = w.ey[r - w.r0] * w.ex[c - w.c0];
        const double f = 1.0 - g;
        double others;  // product of the other points' factors
        if (f < kZeroFactor) others = zeros(r, c) == 1 ? keep(r, c) : 0.0;
        else others = zeros(r, c) > 0 ? 0.0 : keep(r, c) / f;
        const double s = weight(r, c) * others * g * inv_r2;
        gu += s * (c - u);
        gv += s * (r - vv);
      }
    const Vec3 x = points.row(i).transpose();
    const Vec3 cam = ext.R * x + ext.T;
    for (int which = 0; which < 2; ++which) {
      const Vec3 dc = (which == 0 ? dr_a : dr_e) * x;
      const double du = rig.focal * (dc.x() * cam.z() - cam.x() * dc.z()) / (cam.z() * cam.z());
      const double dv = rig.focal * (dc.y() * cam.z() - cam.y() * dc.z()) / (cam.z() * cam.z());
      (which == 0 ? out.d_azimuth : out.d_elevation) += gu * du + gv * dv;
    }
  }
  return out;
}

}  // namespace kpnet
