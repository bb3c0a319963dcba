#include <cmath>

#include "doctest.h"
#include "popup/geometry.h"
#include "popup/popup.h"
#include "test_util.h"

using namespace popup;
using popup::testing::plane_distance;

namespace {

const Intrinsics kUnit(1.0, 1.0, 0.0, 0.0);

Eigen::Matrix3d rot_z(double a) { return Eigen::AngleAxisd(a, Eigen::Vector3d::UnitZ()).toRotationMatrix(); }

// Three non-collinear points on a plane, generated independently of
// transform_plane.
std::array<Eigen::Vector3d, 3> points_on(const Plane& p) {
  const Eigen::Vector3d n = p.normal();
  const Eigen::Vector3d base = -p.offset() * n;
  const Eigen::Vector3d u = n.unitOrthogonal();
  const Eigen::Vector3d v = n.cross(u);
  return {base, base + 1.3 * u, base - 0.7 * u + 2.1 * v};
}

}  // namespace

TEST_CASE("plane construction normalizes and canonicalizes") {
  const Plane p(Eigen::Vector3d(0, 0, -2), 4.0);
  CHECK(p.normal().norm() == doctest::Approx(1.0));
  CHECK(p.normal().z() == doctest::Approx(1.0));
  CHECK(p.offset() == doctest::Approx(-2.0));
}

TEST_CASE("transform_plane examples") {
  const Plane ground(Eigen::Vector3d(0, 0, 1), 0.0);
  CHECK(plane_distance(transform_plane(ground, Pose3::Identity()), ground) < 1e-15);

  const Pose3 lift(Eigen::Matrix3d::Identity(), Eigen::Vector3d(0, 0, 1.5));
  const Plane lifted = transform_plane(ground, lift);
  CHECK(plane_distance(lifted, Plane(Eigen::Vector3d(0, 0, 1), -1.5)) < 1e-15);
  for (const auto& p : points_on(ground)) CHECK(std::abs(lifted.signed_distance(lift * p)) < 1e-12);

  const Pose3 yaw(rot_z(M_PI / 2), Eigen::Vector3d::Zero());
  CHECK(plane_distance(transform_plane(Plane(Eigen::Vector3d(1, 0, 0), 2.0), yaw),
                       Plane(Eigen::Vector3d(0, 1, 0), 2.0)) < 1e-15);
}

TEST_CASE("transform_plane round trip and point consistency") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    const Plane p = popup::testing::random_plane(rng);
    const Pose3 t = popup::testing::random_pose(rng);
    const Plane moved = transform_plane(p, t);
    CHECK(std::abs(moved.normal().norm() - 1.0) < 1e-12);
    CHECK(plane_distance(transform_plane(moved, t.inverse()), p) < 1e-12);
    for (const auto& x : points_on(p)) CHECK(std::abs(moved.signed_distance(t * x)) < 1e-9);
  }
}

TEST_CASE("backproject_to_plane examples") {
  const Plane front(Eigen::Vector3d(0, 0, 1), -2.0);
  const Eigen::Vector3d axis = backproject_to_plane(pixel_ray(0, 0), kUnit, front);
  CHECK((axis - Eigen::Vector3d(0, 0, 2)).norm() < 1e-15);
  const Eigen::Vector3d diag = backproject_to_plane(pixel_ray(1, 1), kUnit, front);
  CHECK((diag - Eigen::Vector3d(2, 2, 2)).norm() < 1e-15);
  CHECK(std::abs(front.signed_distance(diag)) < 1e-15);

  try {
    backproject_to_plane(pixel_ray(1, 0), kUnit, Plane(Eigen::Vector3d(0, 1, 0), -1.0));
    FAIL("expected RayParallelToPlane");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RayParallelToPlane);
  }
  try {
    backproject_to_plane(pixel_ray(0, 0), kUnit, Plane(Eigen::Vector3d(0, 0, 1), 2.0));
    FAIL("expected BehindCamera");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BehindCamera);
  }
}

TEST_CASE("backprojected points lie on ray and plane") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> px(0.0, 640.0);
  const Intrinsics k(320, 320, 320, 240);
  int checked = 0;
  while (checked < 500) {
    const Plane p = popup::testing::random_plane(rng);
    const Eigen::Vector3d u = pixel_ray(px(rng), px(rng) * 0.75);
    Eigen::Vector3d x;
    try {
      x = backproject_to_plane(u, k, p);
    } catch (const Error&) {
      continue;
    }
    ++checked;
    CHECK(std::abs(p.signed_distance(x)) < 1e-9);
    const Eigen::Vector3d ray = k.unproject(u);
    CHECK((x - x.z() * ray).norm() < 1e-9 * std::max(1.0, x.norm()));
  }
}

TEST_CASE("wall_from_ground_points examples") {
  const Plane ground(Eigen::Vector3d(0, 0, 1), 0.0);
  const Plane w1 = wall_from_ground_points<double>({0, 0, 0}, {1, 0, 0}, ground);
  CHECK(plane_distance(w1, Plane(Eigen::Vector3d(0, 1, 0), 0.0)) < 1e-15);
  // n = (0,0,1) x (0,3,0) = (-3,0,0); d from n.p0 + d = 0.
  const Plane w2 = wall_from_ground_points<double>({1, 0, 2}, {1, 3, 2}, ground);
  CHECK(plane_distance(w2, Plane(Eigen::Vector3d(-1, 0, 0), 1.0)) < 1e-15);
  try {
    wall_from_ground_points<double>({1, 1, 1}, {1, 1, 1}, ground);
    FAIL("expected DegenerateEdge");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateEdge);
  }
}

TEST_CASE("walls are orthogonal to the ground and contain both points") {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 500; ++i) {
    const Plane g = popup::testing::random_plane(rng);
    const Eigen::Vector3d base = -g.offset() * g.normal();
    const Eigen::Vector3d u = g.normal().unitOrthogonal();
    const Eigen::Vector3d v = g.normal().cross(u);
    const Eigen::Vector3d p0 = base + popup::testing::random_vector(rng).x() * u + popup::testing::random_vector(rng).y() * v;
    const Eigen::Vector3d p1 = p0 + 0.5 * u + popup::testing::random_vector(rng).z() * v;
    const Plane w = wall_from_ground_points(p0, p1, g);
    CHECK(std::abs(w.normal().dot(g.normal())) < 1e-9);
    CHECK(std::abs(w.signed_distance(p0)) < 1e-9);
    CHECK(std::abs(w.signed_distance(p1)) < 1e-9);
  }
}

TEST_CASE("rotation_from_vanishing_points") {
  const Eigen::Matrix3d r = rotation_from_vanishing_points(Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitY(),
                                                           Eigen::Vector3d::UnitZ(), kUnit);
  CHECK((r - Eigen::Matrix3d::Identity()).norm() < 1e-12);

  std::mt19937_64 rng(17);
  const Intrinsics k(320, 310, 321, 239);
  int done = 0;
  while (done < 200) {
    const Eigen::Matrix3d truth = popup::testing::random_rotation(rng);
    // Only rotations inside the sign convention (forward axis toward +x) are
    // recoverable from unsigned directions.
    if (truth(0, 2) < 0.0) continue;
    ++done;
    const Eigen::Matrix3d kk = k.matrix();
    const Eigen::Vector3d v1 = kk * truth.transpose() * Eigen::Vector3d::UnitX();
    const Eigen::Vector3d v2 = kk * truth.transpose() * Eigen::Vector3d::UnitY();
    const Eigen::Vector3d v3 = kk * truth.transpose() * Eigen::Vector3d::UnitZ();
    const Eigen::Matrix3d est = rotation_from_vanishing_points(v1, v2, v3, k);
    CHECK((est - truth).norm() < 1e-9);
    CHECK(est.determinant() > 0.0);
  }

  try {
    rotation_from_vanishing_points(Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitX(), Eigen::Vector3d::UnitZ(),
                                   kUnit);
    FAIL("expected DegenerateVanishingPoints");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateVanishingPoints);
  }
}

TEST_CASE("popup_frame degenerate inputs") {
  const Intrinsics k(320, 320, 320, 240);
  Eigen::Matrix3d look_x;
  look_x << 0, 0, 1, -1, 0, 0, 0, -1, 0;
  const Pose3 pose(look_x, Eigen::Vector3d(0, 0, 1));
  const PopupResult only_ground = popup_frame({}, pose, k);
  REQUIRE(only_ground.planes.size() == 1);
  CHECK(only_ground.planes[0].label == PlaneLabel::Ground);
  CHECK(plane_distance(only_ground.planes[0].plane, Plane(Eigen::Vector3d(0, -1, 0), 1.0)) < 1e-12);

  const Pose3 below(look_x, Eigen::Vector3d(0, 0, -0.5));
  try {
    popup_frame({}, below, k);
    FAIL("expected PreconditionViolation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::PreconditionViolation);
  }

  // A single edge above the horizon cannot be popped up.
  const std::vector<EdgeSegment> sky{EdgeSegment({100, 50}, {300, 60}, 0)};
  try {
    popup_frame(sky, pose, k);
    FAIL("expected EmptyFrame");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptyFrame);
  }
}

TEST_CASE("popup wall distances scale with camera height") {
  const Intrinsics k(320, 320, 320, 240);
  Eigen::Matrix3d look_x;
  look_x << 0, 0, 1, -1, 0, 0, 0, -1, 0;
  const std::vector<EdgeSegment> edges{EdgeSegment({10, 300}, {200, 260}, 0), EdgeSegment({400, 270}, {630, 330}, 1)};
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> s(0.3, 4.0);
  for (int i = 0; i < 50; ++i) {
    const double scale = s(rng);
    const PopupResult a = popup_frame(edges, Pose3(look_x, Eigen::Vector3d(0, 0, 1.0)), k);
    const PopupResult b = popup_frame(edges, Pose3(look_x, Eigen::Vector3d(0, 0, scale)), k);
    REQUIRE(a.planes.size() == b.planes.size());
    for (std::size_t j = 0; j < a.planes.size(); ++j) {
      CHECK(std::abs(std::abs(b.planes[j].plane.offset()) - scale * std::abs(a.planes[j].plane.offset())) < 1e-9);
      CHECK(std::abs(std::abs(b.planes[j].plane.normal().dot(a.planes[j].plane.normal())) - 1.0) < 1e-12);
    }
    // Wall polygons contain their ground endpoints.
    for (std::size_t j = 1; j < b.planes.size(); ++j) {
      for (const auto& v : b.planes[j].polygon) CHECK(std::abs(b.planes[j].plane.signed_distance(v)) < 1e-9);
    }
  }
}

TEST_CASE("planar_convex_hull keeps corners under rounding noise") {
  // Overlapping wall rectangles whose bottom vertices jitter at the 1e-16 level.
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> jitter(-1e-15, 1e-15);
  std::vector<Eigen::Vector3d> pts;
  for (int i = 0; i < 60; ++i) {
    const double y0 = 1.0 + 0.2 * i;
    for (const Eigen::Vector3d& p : {Eigen::Vector3d(1, y0, 0), Eigen::Vector3d(1, 1, 0), Eigen::Vector3d(1, 1, 2.5),
                                     Eigen::Vector3d(1, y0, 2.5)}) {
      pts.push_back(p + Eigen::Vector3d(jitter(rng), 0, jitter(rng)));
    }
  }
  const auto hull = planar_convex_hull(pts, Eigen::Vector3d::UnitX());
  REQUIRE(hull.size() == 4);
  CHECK(polygon_area(hull) == doctest::Approx(2.5 * 11.8).epsilon(1e-9));
  for (const auto& corner : {Eigen::Vector3d(1, 1, 0), Eigen::Vector3d(1, 12.8, 0), Eigen::Vector3d(1, 12.8, 2.5),
                             Eigen::Vector3d(1, 1, 2.5)}) {
    double best = 1e9;
    for (const auto& h : hull) best = std::min(best, (h - corner).norm());
    CHECK(best < 1e-9);
  }
}
