#pragma once

#include "kpnet/types.hpp"

#include <Eigen/Core>

#include <numbers>
#include <vector>

namespace kpnet {

inline constexpr int kAzimuthBins = 24;
inline constexpr int kElevationBins = 12;
inline constexpr double kBinWidth = std::numbers::pi / 12.0;  // 15 degrees
inline constexpr double kDefaultDistance = 2.0;

double degrees(double radians);
double radians(double degrees);

struct Viewpoint {
  double azimuth = 0.0;    // radians, wrapped into [0, 2pi)
  double elevation = 0.0;  // radians, clamped to [-pi/2, pi/2]
  double distance = kDefaultDistance;

  /// Wrapped/clamped copy.
  Viewpoint normalized() const;
  /// Unit vector from the origin towards the camera.
  Vec3 direction() const;
};

/// Great-circle angle between the two camera directions, in radians.
double angular_error(const Viewpoint& a, const Viewpoint& b);

struct ViewpointBin {
  int azimuth = 0;    // [0, 24), circular
  int elevation = 0;  // [0, 12), bin 0 starts at -90 degrees
  bool wraps = true;  // azimuth bins 0 and 23 are adjacent

  int flat() const { return elevation * kAzimuthBins + azimuth; }
  friend bool operator==(const ViewpointBin& a, const ViewpointBin& b) {
    return a.azimuth == b.azimuth && a.elevation == b.elevation;
  }
};

ViewpointBin bin_of(const Viewpoint& v);
Viewpoint bin_center(const ViewpointBin& bin, double distance = kDefaultDistance);
/// Steps between azimuth bins along the shorter way round the circle.
int azimuth_bin_distance(int a, int b);

struct CameraRig {
  int width = 128;
  int height = 128;
  double focal = 1.2 * 64.0;  // pixels
  double cx = 64.0;
  double cy = 64.0;

  /// Square rig with focal 1.2 * res / 2 and the principal point at the centre.
  static CameraRig standard(int resolution = 128);
  void validate() const;
};

/// World-to-camera transform x_cam = R x + T. The camera sits at
/// distance * direction() looking at the origin; camera x points right and
/// y points down in the image, with world +y as the up reference (world +x
/// exactly at the poles).
struct Extrinsics {
  Eigen::Matrix3d R;
  Vec3 T;
};
Extrinsics viewpoint_to_camera(const Viewpoint& v);

/// dR/d(azimuth) and dR/d(elevation) of the look-at rotation (T is constant).
void rotation_derivatives(const Viewpoint& v, Eigen::Matrix3d& d_azimuth, Eigen::Matrix3d& d_elevation);

struct Projection {
  Eigen::MatrixXd pixels;     // N x 2, (u, v) with u along image columns
  Eigen::VectorXd depth;      // camera-space z
  std::vector<char> in_front; // 0 for points at or behind the camera plane
};

/// Pixel centres sit at integer coordinates: pixel (row i, col j) is (u=j, v=i).
Projection project_points(const PointMatrix& points, const Viewpoint& v, const CameraRig& rig);
Eigen::Vector2d project_point(const Vec3& p, const Viewpoint& v, const CameraRig& rig, double* depth = nullptr);

}  // namespace kpnet
