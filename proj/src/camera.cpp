#include "kpnet/camera.hpp"

#include "kpnet/error.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace kpnet {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kHalfPi = 0.5 * std::numbers::pi;
constexpr double kMinDepth = 1e-9;
}  // namespace

double degrees(double r) { return r * 180.0 / std::numbers::pi; }
double radians(double d) { return d * std::numbers::pi / 180.0; }

Viewpoint Viewpoint::normalized() const {
  Viewpoint v = *this;
  v.azimuth = std::fmod(azimuth, kTwoPi);
  if (v.azimuth < 0.0) v.azimuth += kTwoPi;
  if (v.azimuth >= kTwoPi) v.azimuth = 0.0;
  v.elevation = std::clamp(elevation, -kHalfPi, kHalfPi);
  return v;
}

Vec3 Viewpoint::direction() const {
  return Vec3(std::cos(elevation) * std::sin(azimuth), std::sin(elevation), std::cos(elevation) * std::cos(azimuth));
}

double angular_error(const Viewpoint& a, const Viewpoint& b) {
  const Vec3 da = a.direction(), db = b.direction();
  // atan2 form stays accurate for tiny angles
  return std::atan2(da.cross(db).norm(), da.dot(db));
}

ViewpointBin bin_of(const Viewpoint& raw) {
  const Viewpoint v = raw.normalized();
  ViewpointBin b;
  b.azimuth = std::min(kAzimuthBins - 1, static_cast<int>(std::floor(v.azimuth / kBinWidth)));
  b.elevation = std::clamp(static_cast<int>(std::floor((v.elevation + kHalfPi) / kBinWidth)), 0, kElevationBins - 1);
  return b;
}

Viewpoint bin_center(const ViewpointBin& bin, double distance) {
  Viewpoint v;
  v.azimuth = (bin.azimuth + 0.5) * kBinWidth;
  v.elevation = -kHalfPi + (bin.elevation + 0.5) * kBinWidth;
  v.distance = distance;
  return v;
}

int azimuth_bin_distance(int a, int b) {
  const int d = std::abs(a - b) % kAzimuthBins;
  return std::min(d, kAzimuthBins - d);
}

CameraRig CameraRig::standard(int resolution) {
  CameraRig rig;
  rig.width = rig.height = resolution;
  rig.focal = 1.2 * (resolution / 2.0);
  rig.cx = rig.cy = resolution / 2.0;
  return rig;
}

void CameraRig::validate() const {
  if (width < 1 || height < 1) throw Error(ErrorCode::InvalidConfig, "camera resolution must be positive");
  if (!(focal > 0.0)) throw Error(ErrorCode::InvalidConfig, "camera focal length must be positive");
  if (cx < 0.0 || cx > width || cy < 0.0 || cy > height)
    throw Error(ErrorCode::InvalidConfig, "principal point must lie inside the image");
}

Extrinsics viewpoint_to_camera(const Viewpoint& raw) {
  const Viewpoint v = raw.normalized();
  const double sa = std::sin(v.azimuth), ca = std::cos(v.azimuth);
  const double se = std::sin(v.elevation), ce = std::cos(v.elevation);
  Extrinsics e;
  if (std::abs(ce) < 1e-12) {
    // looking straight down/up: world +x is the up reference
    const Vec3 z = -v.direction().normalized();
    const Vec3 x = z.cross(Vec3::UnitX()).normalized();
    const Vec3 y = z.cross(x);
    e.R.row(0) = x.transpose();
    e.R.row(1) = y.transpose();
    e.R.row(2) = z.transpose();
  } else {
    e.R << ca, 0.0, -sa,            //
        se * sa, -ce, se * ca,      //
        -ce * sa, -se, -ce * ca;
  }
  e.T = Vec3(0.0, 0.0, v.distance);
  return e;
}

void rotation_derivatives(const Viewpoint& raw, Eigen::Matrix3d& da, Eigen::Matrix3d& de) {
  const Viewpoint v = raw.normalized();
  const double sa = std::sin(v.azimuth), ca = std::cos(v.azimuth);
  const double se = std::sin(v.elevation), ce = std::cos(v.elevation);
  da << -sa, 0.0, -ca,       //
      se * ca, 0.0, -se * sa,  //
      -ce * ca, 0.0, ce * sa;
  de << 0.0, 0.0, 0.0,       //
      ce * sa, se, ce * ca,  //
      se * sa, -ce, se * ca;
}

Projection project_points(const PointMatrix& points, const Viewpoint& v, const CameraRig& rig) {
  const auto ext = viewpoint_to_camera(v);
  const Eigen::Index n = points.rows();
  Projection out;
  out.pixels.resize(n, 2);
  out.depth.resize(n);
  out.in_front.assign(static_cast<std::size_t>(n), 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 x = ext.R * points.row(i).transpose() + ext.T;
    out.depth[i] = x.z();
    if (x.z() <= kMinDepth) {
      out.in_front[static_cast<std::size_t>(i)] = 0;
      out.pixels.row(i).setZero();
      continue;
    }
    out.pixels(i, 0) = rig.focal * x.x() / x.z() + rig.cx;
    out.pixels(i, 1) = rig.focal * x.y() / x.z() + rig.cy;
  }
  return out;
}

Eigen::Vector2d project_point(const Vec3& p, const Viewpoint& v, const CameraRig& rig, double* depth) {
  PointMatrix one(1, 3);
  one.row(0) = p.transpose();
  const auto proj = project_points(one, v, rig);
  if (depth) *depth = proj.depth[0];
  return proj.pixels.row(0).transpose();
}

}  // namespace kpnet
