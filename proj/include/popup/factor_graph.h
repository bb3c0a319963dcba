#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "popup/boundary.h"
#include "popup/factors.h"
#include "popup/minimal_plane.h"
#include "popup/popup.h"

namespace popup {

struct PoseNode {
  int id = 0;
  Pose3 pose;
};

struct PlaneLandmark {
  int id = 0;
  MinimalPlane minimal;
  PlaneLabel label = PlaneLabel::Wall;
  std::vector<Eigen::Vector3d> polygon;  // world frame
  int last_seen = -1;                    // most recent observing pose id
};

struct PriorPoseFactor {
  int pose = 0;
  Pose3 measured;
  Matrix6d covariance = Matrix6d::Identity();
};

struct OdometryFactor {
  int from = 0;
  int to = 0;
  Pose3 relative;
  Matrix6d covariance = Matrix6d::Identity();
};

struct PlaneFactor {
  int pose = 0;
  int landmark = 0;
  Plane measured;  // camera frame
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
  int edge_index = -1;  // index into the pose's selected edges, -1 for ground
};

using Factor = std::variant<PriorPoseFactor, OdometryFactor, PlaneFactor>;

inline constexpr double kDefaultPlaneSigma = 0.02;

class FactorGraph {
 public:
  // Pose ids must be strictly increasing.
  void add_pose(int id, const Pose3& pose);
  int add_landmark(PlaneLabel label, const Plane& plane_w, std::vector<Eigen::Vector3d> polygon_w = {});
  // Inserts a landmark under its own id, e.g. when loading a saved graph.
  void insert_landmark(PlaneLandmark landmark);
  // Validates variable references and covariance definiteness.
  void add_factor(Factor factor);

  bool has_pose(int id) const;
  bool has_landmark(int id) const { return landmarks_.count(id) != 0; }
  const Pose3& pose(int id) const;
  Pose3& pose(int id);
  const PlaneLandmark& landmark(int id) const;
  PlaneLandmark& landmark(int id);

  const std::vector<PoseNode>& poses() const { return poses_; }
  std::vector<PoseNode>& poses() { return poses_; }
  const std::map<int, PlaneLandmark>& landmarks() const { return landmarks_; }
  std::map<int, PlaneLandmark>& landmarks() { return landmarks_; }
  const std::vector<Factor>& factors() const { return factors_; }
  std::vector<Factor>& factors() { return factors_; }

  std::optional<int> ground_id() const;
  int next_landmark_id() const { return next_landmark_id_; }

  // Removes non-ground landmarks that no factor references.
  std::size_t remove_orphan_landmarks();
  std::size_t landmark_degree(int id) const;

  // Throws PreconditionViolation describing the first broken invariant.
  void validate() const;

  double chi2() const;

 private:
  std::vector<PoseNode> poses_;
  std::map<int, PlaneLandmark> landmarks_;
  std::vector<Factor> factors_;
  int next_landmark_id_ = 0;
};

// Whitened residual of one factor against the current graph state.
Eigen::VectorXd factor_residual(const FactorGraph& graph, const Factor& factor);

// One selected-edge list per pose, used to recompute plane measurements.
struct FrameEdges {
  int pose_id = 0;
  std::vector<EdgeSegment> edges;
};

struct RepopupReport {
  std::size_t updated = 0;
  std::size_t dropped = 0;
  std::vector<std::string> diagnostics;
};

// Recomputes every plane factor's measurement by popping up its frame at the
// current pose estimate. Wall factors whose edge no longer pops up are
// dropped; ground factors are kept.
RepopupReport repopup_measurements(FactorGraph& graph, std::span<const FrameEdges> frames, const Intrinsics& k,
                                   const Plane& ground_w = Plane(Eigen::Vector3d::UnitZ(), 0.0),
                                   double wall_height = kDefaultWallHeight);

// prev * (prev2^-1 * prev).
Pose3 predict_pose_constant_velocity(const Pose3& prev, const Pose3& prev2);

}  // namespace popup
