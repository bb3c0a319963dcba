#include "popup/popup.h"

#include "popup/minimal_plane.h"

#include <Eigen/Geometry>
#include <algorithm>
#include <sstream>

namespace popup {

namespace {

// Orthonormal basis (u, v) of the plane with normal n.
std::pair<Eigen::Vector3d, Eigen::Vector3d> plane_basis(const Eigen::Vector3d& n) {
  const Eigen::Vector3d helper = std::abs(n.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  const Eigen::Vector3d u = n.cross(helper).normalized();
  return {u, n.cross(u)};
}

double cross2(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

}  // namespace

double camera_height(const Pose3& pose, const Plane& ground_w) { return ground_w.signed_distance(pose.t); }

std::vector<Eigen::Vector3d> planar_convex_hull(std::span<const Eigen::Vector3d> points,
                                                const Eigen::Vector3d& normal) {
  if (points.size() < 3) return {points.begin(), points.end()};
  const auto [u, v] = plane_basis(normal.normalized());
  const Eigen::Vector3d origin = points.front();
  std::vector<std::pair<Eigen::Vector2d, std::size_t>> pts;
  double extent = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Eigen::Vector3d d = points[i] - origin;
    pts.emplace_back(Eigen::Vector2d(d.dot(u), d.dot(v)), i);
    extent = std::max(extent, pts.back().first.cwiseAbs().maxCoeff());
  }
  // Snap to a grid relative to the extent so rounding noise cannot reorder
  // points that are collinear in exact arithmetic.
  const double cell = std::max(extent, 1e-300) * 1e-9;
  for (auto& p : pts) p.first = (p.first / cell).array().round().matrix() * cell;
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.first.x() < b.first.x() || (a.first.x() == b.first.x() && a.first.y() < b.first.y());
  });
  // Andrew's monotone chain.
  std::vector<std::pair<Eigen::Vector2d, std::size_t>> hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross2(hull[k - 2].first, hull[k - 1].first, p.first) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    const auto& p = pts[i - 1];
    while (k >= t && cross2(hull[k - 2].first, hull[k - 1].first, p.first) <= 0.0) --k;
    hull[k++] = p;
  }
  hull.resize(k > 1 ? k - 1 : k);
  std::vector<Eigen::Vector3d> out;
  out.reserve(hull.size());
  for (const auto& h : hull) out.push_back(points[h.second]);
  return out;
}

double polygon_area(std::span<const Eigen::Vector3d> polygon) {
  if (polygon.size() < 3) return 0.0;
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < polygon.size(); ++i) {
    acc += polygon[i].cross(polygon[(i + 1) % polygon.size()]);
  }
  return 0.5 * acc.norm();
}

PopupResult popup_frame(std::span<const EdgeSegment> edges, const Pose3& pose, const Intrinsics& k,
                        const Plane& ground_w, double wall_height) {
  if (!is_valid_rotation(pose.R, 1e-6)) {
    throw Error(ErrorCode::PreconditionViolation, "pose rotation is not orthonormal");
  }
  const double height = camera_height(pose, ground_w);
  if (!(height > 0.0)) {
    throw Error(ErrorCode::PreconditionViolation, "camera centre is not above the ground plane");
  }
  const Plane ground_c = transform_plane(ground_w, pose.inverse());
  // Up direction in the camera frame: toward the camera side of the ground.
  const Eigen::Vector3d up = ground_c.offset() > 0.0 ? ground_c.normal() : Eigen::Vector3d(-ground_c.normal());
  const Eigen::Vector3d foot = -up * std::abs(ground_c.offset());

  PopupResult result;
  result.planes.push_back(PlaneMeasurement{ground_c, PlaneLabel::Ground, {}, -1});
  std::vector<Eigen::Vector3d> ground_points{foot};

  for (std::size_t i = 0; i < edges.size(); ++i) {
    const EdgeSegment& e = edges[i];
    try {
      const Eigen::Vector3d p0 = backproject_to_plane(pixel_ray(e.a().x(), e.a().y()), k, ground_c);
      const Eigen::Vector3d p1 = backproject_to_plane(pixel_ray(e.b().x(), e.b().y()), k, ground_c);
      const Plane wall = wall_from_ground_points(p0, p1, ground_c);
      result.planes.push_back(PlaneMeasurement{
          wall, PlaneLabel::Wall, {p0, p1, p1 + wall_height * up, p0 + wall_height * up}, static_cast<int>(i)});
      ground_points.push_back(p0);
      ground_points.push_back(p1);
    } catch (const Error& err) {
      std::ostringstream msg;
      msg << "edge " << e.id() << " skipped: " << err.what();
      result.diagnostics.push_back(msg.str());
    }
  }
  if (!edges.empty() && result.planes.size() == 1) {
    throw Error(ErrorCode::EmptyFrame, "no edge could be popped up");
  }

  std::vector<Eigen::Vector3d> hull = planar_convex_hull(ground_points, up);
  if (polygon_area(hull) < 1e-9) {
    const auto [u, v] = plane_basis(up);
    hull = {foot - u - v, foot + u - v, foot + u + v, foot - u + v};
  }
  result.planes.front().polygon = std::move(hull);
  return result;
}

Eigen::Matrix3d wall_measurement_covariance(const EdgeSegment& edge, const Pose3& pose, const Intrinsics& k,
                                            double pixel_sigma, double floor_sigma, const Plane& ground_w) {
  const Plane ground_c = transform_plane(ground_w, pose.inverse());
  Eigen::Vector4d px(edge.a().x(), edge.a().y(), edge.b().x(), edge.b().y());
  const auto wall = [&](const Eigen::Vector4d& c) {
    return plane_to_quaternion(wall_from_ground_edge(pixel_ray(c(0), c(1)), pixel_ray(c(2), c(3)), k, ground_c));
  };
  const Eigen::Vector4d q0 = wall(px);
  constexpr double h = 1e-3;
  Eigen::Matrix<double, 3, 4> j;
  for (int i = 0; i < 4; ++i) {
    Eigen::Vector4d d = Eigen::Vector4d::Zero();
    d(i) = h;
    const Eigen::Vector3d plus = quat_log<double>(quat_mul<double>(quat_conj<double>(wall(px + d)), q0));
    const Eigen::Vector3d minus = quat_log<double>(quat_mul<double>(quat_conj<double>(wall(px - d)), q0));
    j.col(i) = (plus - minus) / (2.0 * h);
  }
  return pixel_sigma * pixel_sigma * j * j.transpose() + floor_sigma * floor_sigma * Eigen::Matrix3d::Identity();
}

}  // namespace popup
