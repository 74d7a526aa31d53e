#include <doctest.h>

#include "kpnet/camera.hpp"
#include "kpnet/error.hpp"
#include "kpnet/rng.hpp"
#include "kpnet/silhouette.hpp"
#include "kpnet/synth.hpp"
#include "kpnet/transfer.hpp"
#include "kpnet/viewpoint_search.hpp"
#include "oracles.hpp"

#include <Eigen/Geometry>

#include <random>

using namespace kpnet;

namespace {

constexpr double kPi = 3.14159265358979323846;

// textbook look-at: eye on the view sphere, world y up, image y down
Eigen::Vector2d lookat_project(const Vec3& p, double az, double el, double d, const CameraRig& rig) {
  const Vec3 eye = d * Vec3(std::cos(el) * std::sin(az), std::sin(el), std::cos(el) * std::cos(az));
  const Vec3 fwd = (-eye).normalized();
  const Vec3 right = fwd.cross(Vec3::UnitY()).normalized();
  const Vec3 down = fwd.cross(right);
  const Vec3 q = p - eye;
  const double z = fwd.dot(q);
  return {rig.focal * right.dot(q) / z + rig.cx, rig.focal * down.dot(q) / z + rig.cy};
}

Eigen::MatrixXd naive_silhouette(const PointMatrix& pts, const Viewpoint& v, const CameraRig& rig, double r) {
  Eigen::MatrixXd keep = Eigen::MatrixXd::Ones(rig.height, rig.width);
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const auto px = lookat_project(pts.row(i).transpose(), v.azimuth, v.elevation, v.distance, rig);
    for (int y = 0; y < rig.height; ++y)
      for (int x = 0; x < rig.width; ++x) {
        const double d2 = (x - px.x()) * (x - px.x()) + (y - px.y()) * (y - px.y());
        keep(y, x) *= 1.0 - std::exp(-d2 / (2 * r * r));
      }
  }
  return (1.0 - keep.array()).matrix();
}

PointMatrix sample_rows(const PointMatrix& p, int n, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, p.rows() - 1);
  PointMatrix out(n, 3);
  for (int i = 0; i < n; ++i) out.row(i) = p.row(pick(rng));
  return out;
}

}  // namespace

TEST_CASE("rotation is orthonormal and looks at the origin") {
  Rng rng(1);
  std::uniform_real_distribution<double> az(0, 2 * kPi), el(-1.5, 1.5);
  for (int t = 0; t < 50; ++t) {
    const Viewpoint v{az(rng), el(rng), 2.0};
    const auto e = viewpoint_to_camera(v);
    CHECK((e.R * e.R.transpose() - Eigen::Matrix3d::Identity()).norm() < 1e-12);
    CHECK(e.R.determinant() == doctest::Approx(1.0));
    const Vec3 centre = e.R * Vec3::Zero() + e.T;
    CHECK(centre.x() == doctest::Approx(0.0));
    CHECK(centre.z() == doctest::Approx(2.0));
    const Vec3 eye = 2.0 * v.direction();
    CHECK((e.R * eye + e.T).norm() < 1e-12);
  }
}

TEST_CASE("projection matches an independent look-at") {
  const auto rig = CameraRig::standard(128);
  Rng rng(2);
  std::uniform_real_distribution<double> az(0, 2 * kPi), el(-1.4, 1.4), u(-0.7, 0.7);
  for (int t = 0; t < 100; ++t) {
    const Viewpoint v{az(rng), el(rng), 2.0 + u(rng)};
    const Vec3 p(u(rng), u(rng), u(rng));
    const auto got = project_point(p, v, rig);
    const auto want = lookat_project(p, v.azimuth, v.elevation, v.distance, rig);
    CHECK((got - want).norm() < 1e-9);
  }
  CHECK((project_point(Vec3::Zero(), Viewpoint{1.0, 0.3, 2.0}, rig) - Eigen::Vector2d(64, 64)).norm() < 1e-12);
  // world up projects above the centre
  CHECK(project_point(Vec3(0, 0.5, 0), Viewpoint{0.4, 0.1, 2.0}, rig).y() < 64);
}

TEST_CASE("points behind the camera are flagged") {
  PointMatrix p(2, 3);
  p << 0, 0, 0, 0, 0, 3;
  const auto proj = project_points(p, Viewpoint{0, 0, 2}, CameraRig::standard());
  CHECK(proj.in_front == std::vector<char>{1, 0});
}

TEST_CASE("rotation derivatives match finite differences") {
  Rng rng(3);
  std::uniform_real_distribution<double> az(0.1, 6.0), el(-1.3, 1.3);
  for (int t = 0; t < 20; ++t) {
    const Viewpoint v{az(rng), el(rng), 2.0};
    Eigen::Matrix3d da, de;
    rotation_derivatives(v, da, de);
    const double h = 1e-6;
    const Eigen::Matrix3d nda = (viewpoint_to_camera({v.azimuth + h, v.elevation, 2}).R -
                                 viewpoint_to_camera({v.azimuth - h, v.elevation, 2}).R) / (2 * h);
    const Eigen::Matrix3d nde = (viewpoint_to_camera({v.azimuth, v.elevation + h, 2}).R -
                                 viewpoint_to_camera({v.azimuth, v.elevation - h, 2}).R) / (2 * h);
    CHECK((da - nda).norm() < 1e-8);
    CHECK((de - nde).norm() < 1e-8);
  }
}

TEST_CASE("viewpoint bins") {
  for (int e = 0; e < kElevationBins; ++e)
    for (int a = 0; a < kAzimuthBins; ++a) {
      const ViewpointBin b{a, e};
      const auto back = bin_of(bin_center(b));
      CHECK(back.azimuth == a);
      CHECK(back.elevation == e);
    }
  CHECK(bin_of(Viewpoint{2 * kPi - 1e-9, 0, 2}).azimuth == kAzimuthBins - 1);
  CHECK(bin_of(Viewpoint{-1e-9, 0, 2}).azimuth == kAzimuthBins - 1);
  CHECK(bin_of(Viewpoint{0, kPi / 2, 2}).elevation == kElevationBins - 1);
  CHECK(azimuth_bin_distance(0, 23) == 1);
  CHECK(azimuth_bin_distance(3, 15) == 12);
  CHECK(degrees(radians(37.0)) == doctest::Approx(37.0));
  CHECK(degrees(angular_error(Viewpoint{0.2, 0.1, 2}, Viewpoint{0.2 + radians(5), 0.1, 2})) ==
        doctest::Approx(5 * std::cos(0.1)).epsilon(1e-3));
}

TEST_CASE("soft silhouette equals the untruncated splat product") {
  const auto shape = generate_shape({ShapeKind::Chair, 4, "c"});
  const auto pts = sample_rows(shape.cloud.points, 150, 5);
  CameraRig rig = CameraRig::standard(48);
  for (const Viewpoint v : {Viewpoint{0.3, 0.2, 2}, Viewpoint{4.0, -0.4, 2.5}}) {
    const auto got = render_soft_silhouette(pts, v, rig, 2.0);
    const auto want = naive_silhouette(pts, v, rig, 2.0);
    CHECK((got.values - want).cwiseAbs().maxCoeff() < 1e-5);
    CHECK(got.values.minCoeff() >= 0.0);
    CHECK(got.values.maxCoeff() <= 1.0);
  }
  CHECK_THROWS_AS(render_soft_silhouette(pts, Viewpoint{}, rig, 0.0), Error);
}

TEST_CASE("silhouette pose gradient matches central differences") {
  const auto shape = generate_shape({ShapeKind::Chair, 8, "c"});
  const auto pts = sample_rows(shape.cloud.points, 400, 9);
  const auto rig = CameraRig::standard(64);
  Rng rng(10);
  std::uniform_real_distribution<double> az(0.2, 6.0), el(-0.5, 0.8), off(-0.15, 0.15);
  for (int t = 0; t < 5; ++t) {
    const Viewpoint truth{az(rng), el(rng), 2};
    const auto target = render_soft_silhouette(pts, truth, rig);
    const Viewpoint v{truth.azimuth + off(rng), truth.elevation + off(rng), 2};
    const auto pl = silhouette_pose_loss(target, pts, v, rig);
    CHECK(pl.loss == doctest::Approx(silhouette_ssd(target, render_soft_silhouette(pts, v, rig))).epsilon(1e-12));
    auto f = [&](const Eigen::VectorXd& x) {
      return silhouette_pose_loss(target, pts, Viewpoint{x[0], x[1], 2}, rig, kDefaultSplatRadius, false).loss;
    };
    const auto num = oracle::central_difference(f, Eigen::Vector2d(v.azimuth, v.elevation), 1e-5);
    CHECK(oracle::relative_error(pl.d_azimuth, num[0]) <= 1e-3);
    CHECK(oracle::relative_error(pl.d_elevation, num[1]) <= 1e-3);
  }
}

TEST_CASE("coarse search recovers bin centres") {
  const auto shape = generate_shape({ShapeKind::Chair, 12, "c"});
  const auto pts = sample_rows(shape.cloud.points, 500, 13);
  const auto rig = CameraRig::standard(48);
  const BinRenderCache cache(pts, rig);
  Rng rng(14);
  std::uniform_int_distribution<int> a(0, kAzimuthBins - 1), e(0, kElevationBins - 1);
  for (int t = 0; t < 10; ++t) {
    const ViewpointBin b{a(rng), e(rng)};
    const auto target = render_soft_silhouette(pts, bin_center(b), rig);
    const auto r = coarse_bin_search(target, cache);
    CHECK(r.bin.flat() == b.flat());
    CHECK(r.loss == 0.0);
    CHECK(r.losses.size() == static_cast<std::size_t>(kAzimuthBins * kElevationBins));
  }
}

TEST_CASE("fine-tuning never ends worse than it starts") {
  const auto shape = generate_shape({ShapeKind::Chair, 15, "c"});
  const auto pts = sample_rows(shape.cloud.points, 500, 16);
  const auto rig = CameraRig::standard(64);
  const Viewpoint truth{1.1, 0.3, 2};
  const auto target = render_soft_silhouette(pts, truth, rig);
  const Viewpoint init{truth.azimuth + radians(5), truth.elevation, 2};
  const auto r = finetune_viewpoint(target, pts, rig, init);
  CHECK(r.loss <= r.initial_loss);
  for (std::size_t i = 1; i < r.accepted.size(); ++i) CHECK(r.accepted[i] <= r.accepted[i - 1]);
  CHECK(angular_error(r.viewpoint, truth) < angular_error(init, truth));
  FinetuneOptions none;
  none.steps = 0;
  const auto same = finetune_viewpoint(target, pts, rig, init, none);
  CHECK(same.viewpoint.azimuth == init.azimuth);
  CHECK(same.viewpoint.elevation == init.elevation);
}

TEST_CASE("z-buffer keeps the nearest point and ties keep the first") {
  const auto rig = CameraRig::standard(32);
  const Viewpoint v{0, 0, 2};  // camera on +z looking down -z
  PointMatrix p(4, 3);
  p << 0, 0, 0.5,  //
      0, 0, -0.5,  //
      0.6, 0, 0,   //
      0.6, 0, 0;   // duplicate of row 2
  Eigen::MatrixXd emb(4, 2);
  emb << 1, 0, 0, 1, 2, 2, 3, 3;
  const auto img = transfer_embeddings_to_image(p, emb, v, rig);
  const auto c = project_point(Vec3(0, 0, 0.5), v, rig);
  const auto centre = static_cast<std::size_t>(std::lround(c.y()) * rig.width + std::lround(c.x()));
  CHECK(img.mask[centre] == 1);
  CHECK(img.source[centre] == 0);
  CHECK(img.embeddings.row(static_cast<Eigen::Index>(centre)) == emb.row(0));
  const auto s = project_point(Vec3(0.6, 0, 0), v, rig);
  const auto side = static_cast<std::size_t>(std::lround(s.y()) * rig.width + std::lround(s.x()));
  CHECK(img.source[side] == 2);
  const auto vis = visible_points(p, v, rig);
  CHECK(vis == std::vector<char>{1, 0, 1, 1});
  CHECK(nearest_pixel(img, emb.row(1)) >= 0);
  CHECK(img.source[static_cast<std::size_t>(nearest_pixel(img, emb.row(0)))] == 0);
  // footprint covers the half-maximum disc of the splat
  CHECK(splat_footprint(2.0) == doctest::Approx(2.0 * std::sqrt(2 * std::log(2.0))));
}
