#pragma once

// Frame-to-map plane association and loop-closure landmark merging.

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "popup/factor_graph.h"

namespace popup {

struct AssociationParams {
  double max_normal_angle = 30.0 * M_PI / 180.0;  // radians
  double max_plane_dist = 0.5;                     // meters
  double min_overlap_ratio = 0.1;
  double w_angle = 0.4;
  double w_dist = 0.4;
  double w_overlap = 0.2;
  // Only landmarks seen within this many frames are candidates; 0 disables.
  int active_window = 30;

  void validate() const;
};

struct LoopParams {
  int gap_min = 30;        // frames
  double radius = 2.0;     // meters
  std::size_t min_matches = 2;
  // Plane distance gate for revisits; looser than frame-to-map association
  // because drift accumulates over a loop.
  double max_plane_dist = 1.0;  // meters
};

struct PairScores {
  double angle = 0.0;     // radians
  double distance = 0.0;  // meters
  double overlap = 0.0;   // [0, 1]
};

// A plane measurement already expressed in the world frame.
struct WorldMeasurement {
  Plane plane;
  PlaneLabel label = PlaneLabel::Wall;
  std::vector<Eigen::Vector3d> polygon;
};

struct LoopCandidate {
  int frame_i = 0;
  int frame_j = 0;
  std::vector<std::pair<int, int>> pairs;  // (landmark seen at i, landmark seen at j)
};

// Throws DegeneratePolygon if either polygon has (near) zero area.
PairScores plane_pair_scores(const Plane& a, std::span<const Eigen::Vector3d> polygon_a, const Plane& b,
                             std::span<const Eigen::Vector3d> polygon_b);
PairScores plane_pair_scores(const PlaneLandmark& candidate, const WorldMeasurement& measurement);

bool passes_gates(const PairScores& s, const AssociationParams& params);
double weighted_score(const PairScores& s, const AssociationParams& params);

// Landmark id per measurement, nullopt meaning "new landmark". Matching is
// one-to-one, greedy by ascending score, ties to the lowest landmark id.
std::vector<std::optional<int>> associate(std::span<const WorldMeasurement> measurements,
                                          const std::map<int, PlaneLandmark>& landmarks,
                                          const AssociationParams& params, int current_frame = -1);

std::vector<LoopCandidate> detect_loop_geometric(const FactorGraph& graph, const LoopParams& loop,
                                                 const AssociationParams& params);

// Plane pairs matched between two specific frames (annotated loops).
LoopCandidate match_frames(const FactorGraph& graph, int frame_i, int frame_j, const AssociationParams& params);

// Moves every factor of `drop` onto `keep` and removes `drop`.
void merge_landmarks(FactorGraph& graph, int keep, int drop);

// Orthogonal projection of points onto a plane.
std::vector<Eigen::Vector3d> project_onto(const Plane& plane, std::span<const Eigen::Vector3d> points);

}  // namespace popup
