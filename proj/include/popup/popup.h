#pragma once

// Single-image pop-up: turn selected ground-wall edges into camera-frame
// ground and wall plane measurements with bounding polygons.

#include <span>
#include <string>
#include <vector>

#include "popup/boundary.h"
#include "popup/geometry.h"

namespace popup {

inline constexpr double kDefaultWallHeight = 2.5;

struct PlaneMeasurement {
  Plane plane;                               // camera frame
  PlaneLabel label = PlaneLabel::Wall;
  std::vector<Eigen::Vector3d> polygon;      // camera frame vertices
  int edge_index = -1;                       // -1 for the ground
};

struct PopupResult {
  std::vector<PlaneMeasurement> planes;     // ground first
  std::vector<std::string> diagnostics;     // skipped edges
};

// Height of the camera centre above the world ground plane.
double camera_height(const Pose3& pose, const Plane& ground_w);

// Throws PreconditionViolation if the camera is not strictly above the
// ground, EmptyFrame if edges were given but none could be popped up.
PopupResult popup_frame(std::span<const EdgeSegment> edges, const Pose3& pose, const Intrinsics& k,
                        const Plane& ground_w = Plane(Eigen::Vector3d::UnitZ(), 0.0),
                        double wall_height = kDefaultWallHeight);

// Covariance of the wall popped up from `edge`, expressed in the chart of
// the plane factor error, for isotropic endpoint noise of `pixel_sigma`.
// `floor_sigma` is added on the diagonal. Throws what the backprojection
// throws.
Eigen::Matrix3d wall_measurement_covariance(const EdgeSegment& edge, const Pose3& pose, const Intrinsics& k,
                                            double pixel_sigma, double floor_sigma,
                                            const Plane& ground_w = Plane(Eigen::Vector3d::UnitZ(), 0.0));

// Convex hull of coplanar points, ordered counter-clockwise about `normal`.
std::vector<Eigen::Vector3d> planar_convex_hull(std::span<const Eigen::Vector3d> points,
                                                const Eigen::Vector3d& normal);

double polygon_area(std::span<const Eigen::Vector3d> polygon);

}  // namespace popup
