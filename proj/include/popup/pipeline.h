#pragma once

// End-to-end runner: edge selection, pop-up, association, graph growth,
// periodic optimization with re-pop-up, and loop closure.

#include <string>
#include <vector>

#include "popup/association.h"
#include "popup/boundary.h"
#include "popup/fusion.h"
#include "popup/io.h"
#include "popup/optimizer.h"
#include "popup/sim.h"

namespace popup {

struct PipelineConfig {
  SelectionParams selection;
  AssociationParams association;
  LoopParams loop;
  bool loop_closure = true;
  SolverSettings solver;

  // Simulation.
  CorridorSpec scenario = CorridorSpec::square_loop();
  double frame_spacing = 0.25;
  NoiseModel noise;

  // Graph construction.
  bool use_odometry = true;
  int optimize_every = 10;
  double plane_sigma = kDefaultPlaneSigma;  // ground factors
  // Wall factors: endpoint noise propagated through the pop-up plus a floor.
  // A zero pixel sigma uses plane_sigma for walls too.
  double pixel_sigma = 1.0;
  double wall_sigma_floor = 0.005;
  double odom_trans_sigma = 0.02;
  double odom_rot_sigma = 0.5 * M_PI / 180.0;
  double motion_trans_sigma = 0.5;  // constant-velocity fallback
  double motion_rot_sigma = 10.0 * M_PI / 180.0;
  double prior_sigma = 1e-3;
  double camera_height = 1.0;       // initial pose when the dataset has none
  double max_popup_depth = 8.0;     // walls farther than this are not used
  double wall_height = kDefaultWallHeight;

  double var_max = kDefaultMaxVariance;

  void validate() const;
};

// JSON with sections selection, association, loop, solver, scenario, noise,
// graph and fusion. Every key is optional; unknown keys throw InvalidSpec.
PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::string& path);
std::string config_to_json(const PipelineConfig& config);

struct PipelineResult {
  FactorGraph graph;
  std::vector<int> frame_ids;
  std::vector<Pose3> trajectory;     // one per frame
  std::vector<FrameEdges> selected;  // edges used per frame
  std::vector<std::string> log;
  std::size_t landmarks_merged = 0;
  std::size_t optimizations = 0;
  double final_chi2 = 0.0;
};

// Throws ParseError for a dataset without intrinsics and SingularSystemError
// when the graph cannot be solved. Per-frame geometric failures are logged.
PipelineResult run_pipeline(const Dataset& data, const PipelineConfig& config);

// Edge selection stage alone: greedy selection against the boundary curve
// followed by pruning and merging.
std::vector<EdgeSegment> select_frame_edges(const FrameRecord& frame, const SelectionParams& params);

}  // namespace popup
