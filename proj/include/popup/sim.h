#pragma once

// Synthetic Manhattan corridor worlds, a boundary-evidence renderer with
// calibrated noise, and trajectory/map/depth evaluation.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "popup/boundary.h"
#include "popup/fusion.h"
#include "popup/geometry.h"
#include "popup/popup.h"

namespace popup {

struct MapPlane {
  Plane plane;  // world frame
  PlaneLabel label = PlaneLabel::Wall;
  std::vector<Eigen::Vector3d> polygon;
};

// Centerline segments joined by +-90 degree turns. With `loop` there is one
// turn per segment, the last closing the circuit at the start.
struct CorridorSpec {
  std::vector<double> lengths;
  std::vector<double> widths;     // one per segment, or a single shared value
  std::vector<double> turns_deg;  // positive turns left
  bool loop = false;
  double camera_height = 1.0;
  double wall_height = kDefaultWallHeight;
  double max_turn_step_deg = 15.0;
  // Open corridors: the walls run this far past both ends of the path.
  double end_margin = 4.0;
  // Loops: the path starts and ends this far along the first segment.
  double start_offset = 0.0;
  Intrinsics k{320.0, 320.0, 320.0, 240.0};
  int width = 640;
  int height = 480;

  static CorridorSpec straight(double length, double width = 2.0);
  static CorridorSpec square_loop(double side = 15.0, double width = 2.0);
};

struct ScenarioTruth {
  std::vector<MapPlane> planes;  // ground first
  std::vector<Pose3> trajectory;
  Intrinsics k{320.0, 320.0, 320.0, 240.0};
  int width = 640;
  int height = 480;
  double path_length = 0.0;
  bool loop = false;

  const MapPlane& ground() const { return planes.front(); }
};

struct NoiseModel {
  double pixel_sigma = 1.0;
  double odom_trans_sigma = 0.02;
  double odom_rot_sigma = 0.5 * M_PI / 180.0;
  double split_probability = 0.3;
  double split_gap = 2.0;  // pixels
  int clutter_per_frame = 2;
  // Odometry noise only in the ground-vehicle degrees of freedom: the two
  // horizontal translations and yaw. The camera height stays constant.
  bool planar_odometry = true;
  std::uint64_t seed = 1;

  static NoiseModel noiseless(std::uint64_t seed = 1);
  void validate() const;
};

struct FrameObservation {
  std::vector<EdgeSegment> edges;            // noisy, split, with clutter
  std::vector<EdgeSegment> true_edges;       // noiseless visible boundary
  std::vector<Eigen::Vector2d> boundary;     // noiseless boundary polyline
  Pose3 odometry;                            // previous-to-current, identity at frame 0
};

// Throws InvalidSpec.
ScenarioTruth generate_corridor(const CorridorSpec& spec, double frame_spacing);

FrameObservation render_frame(const ScenarioTruth& truth, std::size_t frame, const NoiseModel& noise);

// Optical-axis depth of the nearest plane hit per sampled pixel. The ground
// is unbounded; walls are bounded by their (convex) polygons. The raster
// samples pixel (x * stride, y * stride).
Raster render_depth(std::span<const MapPlane> planes, const Pose3& pose, const Intrinsics& k, int width, int height,
                    int stride = 1);

struct EvalOptions {
  int depth_stride = 8;
  int depth_frame_step = 10;  // 0 disables depth metrics
  std::span<const Raster> depth_maps = {};  // optional per-frame full-resolution estimates
  double max_depth = 10.0;                  // truth pixels farther than this are not scored
};

struct EvalReport {
  double ate_mean = 0.0;
  double ate_std = 0.0;
  double ate_endpoint = 0.0;
  double loop_error_percent = 0.0;
  double normal_error_deg = 0.0;
  double depth_error_mean = 0.0;
  double depth_fraction_01 = 0.0;
  double path_length = 0.0;
  std::size_t depth_pixels = 0;
};

// Throws LengthMismatch when trajectory lengths differ.
EvalReport evaluate(const ScenarioTruth& truth, std::span<const Pose3> estimate, std::span<const MapPlane> map,
                    const EvalOptions& options = {});

// Angle between each estimated plane and its best-matching true plane of
// the same label, in radians.
std::vector<double> plane_normal_errors(std::span<const MapPlane> truth, std::span<const MapPlane> estimate);

}  // namespace popup
