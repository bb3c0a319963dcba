#pragma once

// Text dataset records, TUM trajectories, PLY meshes, graph dumps and
// binary depth rasters.

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "popup/factor_graph.h"
#include "popup/fusion.h"
#include "popup/sim.h"

namespace popup {

struct FrameRecord {
  int frame = 0;
  std::vector<EdgeSegment> edges;
  std::vector<Eigen::Vector2d> boundary;
  std::optional<Pose3> odometry;                         // previous-to-current
  std::optional<std::array<Eigen::Vector3d, 3>> vanishing_points;
};

struct Dataset {
  std::optional<Intrinsics> k;
  std::optional<Pose3> initial_pose;
  std::vector<FrameRecord> frames;                       // strictly increasing ids
  std::vector<std::pair<int, int>> loops;
};

// Records: K, INIT, EDGE, XI, ODO, VP, LOOP; '#' starts a comment. Throws
// ParseError naming `source` and the line number.
Dataset parse_dataset(std::istream& in, const std::string& source = "<dataset>");
Dataset read_dataset(const std::string& path);
void write_dataset(std::ostream& out, const Dataset& data);

Dataset dataset_from_simulation(const ScenarioTruth& truth, const NoiseModel& noise);

// `timestamp tx ty tz qx qy qz qw`, 9 significant digits.
void write_trajectory(std::ostream& out, std::span<const Pose3> poses, std::span<const double> timestamps = {});
std::vector<std::pair<double, Pose3>> parse_trajectory(std::istream& in, const std::string& source = "<trajectory>");

struct MeshFace {
  int landmark_id = 0;
  PlaneLabel label = PlaneLabel::Wall;
  std::vector<Eigen::Vector3d> polygon;
};

// ASCII PLY, one face per polygon. Degenerate or non-planar polygons are
// skipped with a diagnostic. Returns the number of faces written.
std::size_t write_mesh(std::ostream& out, std::span<const MeshFace> faces, std::vector<std::string>* diagnostics);
std::vector<MeshFace> mesh_faces(const FactorGraph& graph);

void write_graph(std::ostream& out, const FactorGraph& graph);
FactorGraph parse_graph(std::istream& in, const std::string& source = "<graph>");

// "PUDR", uint32 width, uint32 height, row-major little-endian float32.
void write_raster(const std::string& path, const Raster& raster);
Raster read_raster(const std::string& path);

std::vector<MapPlane> map_planes(const FactorGraph& graph);

}  // namespace popup
