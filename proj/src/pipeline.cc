#include "popup/pipeline.h"

#include <Eigen/SVD>
#include <map>
#include <optional>
#include <set>

namespace popup {

namespace {

const Plane kWorldGround(Eigen::Vector3d::UnitZ(), 0.0);

Matrix6d pose_covariance(double rot_sigma, double trans_sigma) {
  Matrix6d c = Matrix6d::Zero();
  c.diagonal().head<3>().setConstant(rot_sigma * rot_sigma);
  c.diagonal().tail<3>().setConstant(trans_sigma * trans_sigma);
  return c;
}

std::vector<Eigen::Vector3d> to_world(const Pose3& pose, std::span<const Eigen::Vector3d> pts) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.push_back(pose * p);
  return out;
}

Pose3 default_initial_pose(const Dataset& data, const PipelineConfig& config, std::vector<std::string>& log) {
  if (data.initial_pose) return *data.initial_pose;
  const Eigen::Vector3d t(0.0, 0.0, config.camera_height);
  if (!data.frames.empty() && data.frames.front().vanishing_points) {
    const auto& vp = *data.frames.front().vanishing_points;
    try {
      return Pose3(rotation_from_vanishing_points(vp[0], vp[1], vp[2], *data.k), t);
    } catch (const Error& e) {
      log.push_back(std::string("vanishing points unusable, using default orientation: ") + e.what());
    }
  }
  Eigen::Matrix3d r;
  r << 0, 0, 1, -1, 0, 0, 0, -1, 0;
  return Pose3(r, t);
}

struct PlanePair {
  Plane measured;  // camera frame
  Plane map;       // world frame
};

// Pose that best maps measured planes onto their landmarks: rotation from the
// normals, then translation by least squares pulled weakly toward the prior
// for directions no plane constrains. Returns nullopt without two distinct
// normals.
std::optional<Pose3> register_to_planes(const Pose3& prior, std::span<const PlanePair> pairs) {
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (const auto& p : pairs) {
    const Eigen::Vector3d nw = p.map.normal();
    const Eigen::Vector3d nc = p.measured.normal() * ((prior.R * p.measured.normal()).dot(nw) < 0 ? -1.0 : 1.0);
    h += nc * nw.transpose();
  }
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(1) < 0.1) return std::nullopt;
  Eigen::Matrix3d fix = Eigen::Matrix3d::Identity();
  fix(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Eigen::Matrix3d r = svd.matrixV() * fix * svd.matrixU().transpose();

  constexpr double kPull = 1e-6;
  Eigen::Matrix3d a = kPull * Eigen::Matrix3d::Identity();
  Eigen::Vector3d b = kPull * prior.t;
  for (const auto& p : pairs) {
    const Eigen::Vector3d nw = p.map.normal();
    const double sign = (r * p.measured.normal()).dot(nw) < 0 ? -1.0 : 1.0;
    // transform_plane: d_w = d_c - n_w . t
    const double rhs = sign * p.measured.offset() - p.map.offset();
    a += nw * nw.transpose();
    b += nw * rhs;
  }
  return Pose3(r, a.ldlt().solve(b));
}

class Runner {
 public:
  Runner(const Dataset& data, const PipelineConfig& config) : data_(data), config_(config) {
    plane_cov_ = Eigen::Matrix3d::Identity() * config.plane_sigma * config.plane_sigma;
  }

  PipelineResult run() {
    if (!data_.k) throw Error(ErrorCode::ParseError, "dataset has no K record");
    config_.validate();
    const Intrinsics& k = *data_.k;
    for (std::size_t i = 0; i < data_.frames.size(); ++i) {
      add_frame(data_.frames[i], k);
      if ((i + 1) % static_cast<std::size_t>(config_.optimize_every) == 0) solve(k);
    }
    if (!data_.frames.empty()) solve(k);
    res_.final_chi2 = res_.graph.chi2();
    for (const auto& n : res_.graph.poses()) res_.trajectory.push_back(n.pose);
    return std::move(res_);
  }

 private:
  void add_frame(const FrameRecord& fr, const Intrinsics& k) {
    FactorGraph& g = res_.graph;
    std::vector<EdgeSegment> edges = select_frame_edges(fr, config_.selection);

    const bool first = g.poses().empty();
    bool predicted_by_odometry = first;
    Pose3 pose;
    if (first) {
      pose = default_initial_pose(data_, config_, res_.log);
    } else {
      const Pose3& prev = g.poses().back().pose;
      const int prev_id = g.poses().back().id;
      Pose3 rel;
      Matrix6d cov;
      if (fr.odometry && config_.use_odometry) {
        rel = *fr.odometry;
        cov = pose_covariance(config_.odom_rot_sigma, config_.odom_trans_sigma);
        predicted_by_odometry = true;
      } else {
        const Pose3 predicted =
            g.poses().size() >= 2 ? predict_pose_constant_velocity(prev, g.poses()[g.poses().size() - 2].pose) : prev;
        rel = prev.inverse() * predicted;
        cov = pose_covariance(config_.motion_rot_sigma, config_.motion_trans_sigma);
      }
      pose = prev * rel;
      pose.R = Eigen::Quaterniond(pose.R).normalized().toRotationMatrix();
      g.add_pose(fr.frame, pose);
      g.add_factor(OdometryFactor{prev_id, fr.frame, rel, cov});
    }
    if (first) {
      g.add_pose(fr.frame, pose);
      g.add_factor(PriorPoseFactor{fr.frame, pose, pose_covariance(config_.prior_sigma, config_.prior_sigma)});
    }

    PopupResult popped;
    try {
      try {
        popped = popup_frame(edges, pose, k, kWorldGround, config_.wall_height);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyFrame) throw;
        note(fr.frame, e.what());
        popped = popup_frame({}, pose, k, kWorldGround, config_.wall_height);
      }
    } catch (const Error& e) {
      // Without a usable pose the ground is tied to the prediction.
      note(fr.frame, e.what());
      popped.planes = {PlaneMeasurement{transform_plane(kWorldGround, pose.inverse()), PlaneLabel::Ground, {}, -1}};
    }
    for (const auto& d : popped.diagnostics) note(fr.frame, d);

    std::vector<const PlaneMeasurement*> wall_src;
    for (const auto& m : popped.planes) {
      if (m.label == PlaneLabel::Ground) {
        if (!g.ground_id()) g.add_landmark(PlaneLabel::Ground, kWorldGround, to_world(pose, m.polygon));
        g.add_factor(PlaneFactor{fr.frame, *g.ground_id(), m.plane, plane_cov_, -1});
        continue;
      }
      if (std::min(m.polygon[0].z(), m.polygon[1].z()) > config_.max_popup_depth) continue;
      wall_src.push_back(&m);
    }
    const auto to_world_walls = [&](const Pose3& at) {
      std::vector<WorldMeasurement> out;
      for (const auto* m : wall_src) out.push_back({transform_plane(m->plane, at), PlaneLabel::Wall, to_world(at, m->polygon)});
      return out;
    };
    std::vector<WorldMeasurement> walls = to_world_walls(pose);
    auto matches = associate(walls, g.landmarks(), config_.association, fr.frame);

    // Without odometry the motion model lags; track the pose against the map.
    if (!predicted_by_odometry && g.poses().size() > 1) {
      std::vector<PlanePair> pairs{{transform_plane(kWorldGround, pose.inverse()), kWorldGround}};
      for (std::size_t i = 0; i < walls.size(); ++i) {
        if (matches[i]) pairs.push_back({wall_src[i]->plane, g.landmark(*matches[i]).minimal.to_plane()});
      }
      if (const auto tracked = register_to_planes(pose, pairs)) {
        pose = *tracked;
        g.pose(fr.frame) = pose;
        walls = to_world_walls(pose);
        matches = associate(walls, g.landmarks(), config_.association, fr.frame);
      }
    }
    for (std::size_t i = 0; i < walls.size(); ++i) {
      int id;
      if (matches[i]) {
        id = *matches[i];
        grow_polygon(g.landmark(id), walls[i].polygon);
      } else {
        id = g.add_landmark(PlaneLabel::Wall, walls[i].plane, walls[i].polygon);
      }
      g.add_factor(PlaneFactor{fr.frame, id, wall_src[i]->plane, wall_covariance(edges[wall_src[i]->edge_index], pose, k),
                               wall_src[i]->edge_index});
    }
    res_.frame_ids.push_back(fr.frame);
    res_.selected.push_back({fr.frame, std::move(edges)});
  }

  Eigen::Matrix3d wall_covariance(const EdgeSegment& e, const Pose3& pose, const Intrinsics& k) const {
    if (config_.pixel_sigma <= 0.0) return plane_cov_;
    try {
      return wall_measurement_covariance(e, pose, k, config_.pixel_sigma, config_.wall_sigma_floor, kWorldGround);
    } catch (const Error&) {
      return plane_cov_;
    }
  }

  static void grow_polygon(PlaneLandmark& lm, std::span<const Eigen::Vector3d> pts) {
    const Plane p = lm.minimal.to_plane();
    std::vector<Eigen::Vector3d> all = lm.polygon;
    all.insert(all.end(), pts.begin(), pts.end());
    lm.polygon = planar_convex_hull(project_onto(p, all), p.normal());
  }

  void solve(const Intrinsics& k) {
    FactorGraph& g = res_.graph;
    optimize_once();
    const RepopupReport rep = repopup_measurements(g, res_.selected, k, kWorldGround, config_.wall_height);
    for (const auto& d : rep.diagnostics) res_.log.push_back("re-pop-up: " + d);
    g.remove_orphan_landmarks();
    optimize_once();

    std::size_t merged = 0;
    if (config_.loop_closure) {
      merged += merge_annotated_loops();
      for (const auto& cand : detect_loop_geometric(g, config_.loop, config_.association)) merged += merge_pairs(cand);
    }
    if (merged > 0) {
      res_.landmarks_merged += merged;
      optimize_once();
    }
    refresh_polygons(k);
  }

  void optimize_once() {
    ++res_.optimizations;
    optimize(res_.graph, config_.solver);
  }

  std::size_t merge_annotated_loops() {
    std::size_t merged = 0;
    const int latest = res_.graph.poses().back().id;
    for (std::size_t i = 0; i < data_.loops.size(); ++i) {
      const auto [a, b] = data_.loops[i];
      if (applied_loops_.count(i) || b > latest) continue;
      applied_loops_.insert(i);
      if (!res_.graph.has_pose(a) || !res_.graph.has_pose(b)) continue;
      AssociationParams gates = config_.association;
      gates.max_plane_dist = std::max(gates.max_plane_dist, config_.loop.max_plane_dist);
      merged += merge_pairs(match_frames(res_.graph, a, b, gates));
    }
    return merged;
  }

  std::size_t merge_pairs(const LoopCandidate& cand) {
    std::size_t merged = 0;
    for (const auto& [a, b] : cand.pairs) {
      const int ra = resolve(a);
      const int rb = resolve(b);
      if (ra == rb || !res_.graph.has_landmark(ra) || !res_.graph.has_landmark(rb)) continue;
      const int keep = std::min(ra, rb);
      const int drop = std::max(ra, rb);
      merge_landmarks(res_.graph, keep, drop);
      redirect_[drop] = keep;
      res_.log.push_back("loop " + std::to_string(cand.frame_i) + "-" + std::to_string(cand.frame_j) +
                         ": merged landmark " + std::to_string(drop) + " into " + std::to_string(keep));
      ++merged;
    }
    return merged;
  }

  int resolve(int id) const {
    for (auto it = redirect_.find(id); it != redirect_.end(); it = redirect_.find(id)) id = it->second;
    return id;
  }

  // Rebuilds landmark extents from every observation at the current poses.
  void refresh_polygons(const Intrinsics& k) {
    FactorGraph& g = res_.graph;
    std::map<int, std::map<int, std::vector<Eigen::Vector3d>>> by_pose;  // pose -> edge index -> polygon
    for (const auto& fe : res_.selected) {
      try {
        const Pose3& pose = g.pose(fe.pose_id);
        PopupResult p;
        try {
          p = popup_frame(fe.edges, pose, k, kWorldGround, config_.wall_height);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::EmptyFrame) throw;
          p = popup_frame({}, pose, k, kWorldGround, config_.wall_height);
        }
        for (const auto& m : p.planes) by_pose[fe.pose_id][m.edge_index] = to_world(pose, m.polygon);
      } catch (const Error&) {
      }
    }
    std::map<int, std::vector<Eigen::Vector3d>> points;
    for (const auto& f : g.factors()) {
      const auto* pf = std::get_if<PlaneFactor>(&f);
      if (!pf) continue;
      const auto pit = by_pose.find(pf->pose);
      if (pit == by_pose.end()) continue;
      const auto eit = pit->second.find(pf->edge_index);
      if (eit == pit->second.end()) continue;
      auto& dst = points[pf->landmark];
      dst.insert(dst.end(), eit->second.begin(), eit->second.end());
    }
    for (auto& [id, pts] : points) {
      PlaneLandmark& lm = g.landmark(id);
      const Plane p = lm.minimal.to_plane();
      std::vector<Eigen::Vector3d> hull = planar_convex_hull(project_onto(p, pts), p.normal());
      if (hull.size() >= 3) lm.polygon = std::move(hull);
    }
  }

  void note(int frame, const std::string& msg) { res_.log.push_back("frame " + std::to_string(frame) + ": " + msg); }

  const Dataset& data_;
  PipelineConfig config_;
  Eigen::Matrix3d plane_cov_;
  PipelineResult res_;
  std::set<std::size_t> applied_loops_;
  std::map<int, int> redirect_;
};

}  // namespace

std::vector<EdgeSegment> select_frame_edges(const FrameRecord& frame, const SelectionParams& params) {
  if (frame.edges.empty()) return {};
  if (frame.boundary.size() < 2) return postprocess(frame.edges, params);
  const BoundaryCurve curve(frame.boundary);
  const Selection sel = greedy_select(frame.edges, curve, params);
  return postprocess(sel.edges, params);
}

PipelineResult run_pipeline(const Dataset& data, const PipelineConfig& config) { return Runner(data, config).run(); }

}  // namespace popup
