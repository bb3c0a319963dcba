#include "popup/factor_graph.h"

#include <Eigen/Cholesky>
#include <algorithm>
#include <sstream>

namespace popup {

namespace {

template <int N>
void check_covariance(const Eigen::Matrix<double, N, N>& cov) {
  const double asym = (cov - cov.transpose()).norm();
  if (!(asym <= 1e-9 * std::max(1.0, cov.norm()))) {
    throw Error(ErrorCode::PreconditionViolation, "factor covariance is not symmetric");
  }
  Eigen::LLT<Eigen::Matrix<double, N, N>> llt(cov);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::PreconditionViolation, "factor covariance is not positive definite");
  }
}

template <int N>
Eigen::VectorXd whiten(const Eigen::Matrix<double, N, 1>& r, const Eigen::Matrix<double, N, N>& cov) {
  const Eigen::Matrix<double, N, N> l = cov.llt().matrixL();
  return l.template triangularView<Eigen::Lower>().solve(r);
}

}  // namespace

void FactorGraph::add_pose(int id, const Pose3& pose) {
  if (!poses_.empty() && id <= poses_.back().id) {
    throw Error(ErrorCode::PreconditionViolation, "pose ids must be strictly increasing");
  }
  poses_.push_back(PoseNode{id, pose});
}

int FactorGraph::add_landmark(PlaneLabel label, const Plane& plane_w, std::vector<Eigen::Vector3d> polygon_w) {
  if (label == PlaneLabel::Ground && ground_id()) {
    throw Error(ErrorCode::PreconditionViolation, "graph already has a ground landmark");
  }
  const int id = next_landmark_id_++;
  landmarks_.emplace(id, PlaneLandmark{id, MinimalPlane::from_plane(plane_w), label, std::move(polygon_w), -1});
  return id;
}

void FactorGraph::insert_landmark(PlaneLandmark landmark) {
  if (landmarks_.count(landmark.id) || landmark.id < 0) {
    throw Error(ErrorCode::PreconditionViolation, "landmark id " + std::to_string(landmark.id) + " unavailable");
  }
  if (landmark.label == PlaneLabel::Ground && ground_id()) {
    throw Error(ErrorCode::PreconditionViolation, "graph already has a ground landmark");
  }
  next_landmark_id_ = std::max(next_landmark_id_, landmark.id + 1);
  landmarks_.emplace(landmark.id, std::move(landmark));
}

bool FactorGraph::has_pose(int id) const {
  const auto it = std::lower_bound(poses_.begin(), poses_.end(), id,
                                   [](const PoseNode& n, int v) { return n.id < v; });
  return it != poses_.end() && it->id == id;
}

const Pose3& FactorGraph::pose(int id) const {
  const auto it = std::lower_bound(poses_.begin(), poses_.end(), id,
                                   [](const PoseNode& n, int v) { return n.id < v; });
  if (it == poses_.end() || it->id != id) {
    throw Error(ErrorCode::PreconditionViolation, "unknown pose id " + std::to_string(id));
  }
  return it->pose;
}

Pose3& FactorGraph::pose(int id) { return const_cast<Pose3&>(std::as_const(*this).pose(id)); }

const PlaneLandmark& FactorGraph::landmark(int id) const {
  const auto it = landmarks_.find(id);
  if (it == landmarks_.end()) {
    throw Error(ErrorCode::UnknownLandmark, "unknown landmark id " + std::to_string(id));
  }
  return it->second;
}

PlaneLandmark& FactorGraph::landmark(int id) { return const_cast<PlaneLandmark&>(std::as_const(*this).landmark(id)); }

void FactorGraph::add_factor(Factor factor) {
  std::visit(
      [&](auto& f) {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, PriorPoseFactor>) {
          pose(f.pose);
          check_covariance<6>(f.covariance);
        } else if constexpr (std::is_same_v<F, OdometryFactor>) {
          pose(f.from);
          pose(f.to);
          check_covariance<6>(f.covariance);
        } else {
          pose(f.pose);
          PlaneLandmark& lm = landmark(f.landmark);
          lm.last_seen = std::max(lm.last_seen, f.pose);
          check_covariance<3>(f.covariance);
        }
      },
      factor);
  factors_.push_back(std::move(factor));
}

std::optional<int> FactorGraph::ground_id() const {
  for (const auto& [id, lm] : landmarks_) {
    if (lm.label == PlaneLabel::Ground) return id;
  }
  return std::nullopt;
}

std::size_t FactorGraph::landmark_degree(int id) const {
  std::size_t n = 0;
  for (const auto& f : factors_) {
    if (const auto* pf = std::get_if<PlaneFactor>(&f); pf && pf->landmark == id) ++n;
  }
  return n;
}

std::size_t FactorGraph::remove_orphan_landmarks() {
  std::map<int, std::size_t> degree;
  for (const auto& f : factors_) {
    if (const auto* pf = std::get_if<PlaneFactor>(&f)) ++degree[pf->landmark];
  }
  std::size_t removed = 0;
  for (auto it = landmarks_.begin(); it != landmarks_.end();) {
    if (it->second.label != PlaneLabel::Ground && degree[it->first] == 0) {
      it = landmarks_.erase(it);
      ++removed;
    } else {
      ++it;
    }
  }
  return removed;
}

void FactorGraph::validate() const {
  std::map<int, std::size_t> degree;
  for (const auto& f : factors_) {
    std::visit(
        [&](const auto& x) {
          using F = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<F, PriorPoseFactor>) {
            pose(x.pose);
          } else if constexpr (std::is_same_v<F, OdometryFactor>) {
            pose(x.from);
            pose(x.to);
          } else {
            pose(x.pose);
            landmark(x.landmark);
            ++degree[x.landmark];
          }
        },
        f);
  }
  std::size_t grounds = 0;
  for (const auto& [id, lm] : landmarks_) {
    if (lm.label == PlaneLabel::Ground) ++grounds;
    if (degree[id] == 0) {
      throw Error(ErrorCode::PreconditionViolation, "landmark " + std::to_string(id) + " has no factors");
    }
    const double qn = lm.minimal.coeffs().norm();
    if (std::abs(qn - 1.0) > 1e-12) {
      throw Error(ErrorCode::PreconditionViolation, "landmark " + std::to_string(id) + " left the unit sphere");
    }
  }
  if (!landmarks_.empty() && grounds != 1) {
    throw Error(ErrorCode::PreconditionViolation, "graph must contain exactly one ground landmark");
  }
  if (const auto g = ground_id()) {
    std::map<int, bool> seen;
    for (const auto& f : factors_) {
      if (const auto* pf = std::get_if<PlaneFactor>(&f); pf && pf->landmark == *g) seen[pf->pose] = true;
    }
    if (seen.size() != poses_.size()) {
      throw Error(ErrorCode::PreconditionViolation, "ground landmark must be observed by every pose");
    }
  }
}

Eigen::VectorXd factor_residual(const FactorGraph& graph, const Factor& factor) {
  return std::visit(
      [&](const auto& f) -> Eigen::VectorXd {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, PriorPoseFactor>) {
          return whiten<6>(prior_error(graph.pose(f.pose), f.measured), f.covariance);
        } else if constexpr (std::is_same_v<F, OdometryFactor>) {
          return whiten<6>(odometry_error(graph.pose(f.from), graph.pose(f.to), f.relative), f.covariance);
        } else {
          return whiten<3>(plane_factor_error(graph.pose(f.pose), graph.landmark(f.landmark).minimal, f.measured),
                           f.covariance);
        }
      },
      factor);
}

double FactorGraph::chi2() const {
  double total = 0.0;
  for (const auto& f : factors_) total += factor_residual(*this, f).squaredNorm();
  return total;
}

RepopupReport repopup_measurements(FactorGraph& graph, std::span<const FrameEdges> frames, const Intrinsics& k,
                                   const Plane& ground_w, double wall_height) {
  RepopupReport report;
  std::map<int, const FrameEdges*> by_pose;
  for (const auto& fr : frames) by_pose[fr.pose_id] = &fr;

  // pose id -> (edge index -> measured plane); missing entries mean "drop".
  std::map<int, std::map<int, Plane>> fresh;
  std::map<int, bool> skip;
  for (const auto& [pose_id, fr] : by_pose) {
    if (!graph.has_pose(pose_id)) continue;
    const Pose3& pose = graph.pose(pose_id);
    auto& planes = fresh[pose_id];
    try {
      PopupResult popped;
      try {
        popped = popup_frame(fr->edges, pose, k, ground_w, wall_height);
      } catch (const Error& err) {
        if (err.code() != ErrorCode::EmptyFrame) throw;
        report.diagnostics.push_back("pose " + std::to_string(pose_id) + ": " + err.what());
        popped = popup_frame({}, pose, k, ground_w, wall_height);
      }
      for (const auto& m : popped.planes) planes[m.edge_index] = m.plane;
      for (const auto& d : popped.diagnostics) {
        report.diagnostics.push_back("pose " + std::to_string(pose_id) + ": " + d);
      }
    } catch (const Error& err) {
      report.diagnostics.push_back("pose " + std::to_string(pose_id) + " left unchanged: " + err.what());
      skip[pose_id] = true;
    }
  }

  auto& factors = graph.factors();
  std::vector<Factor> kept;
  kept.reserve(factors.size());
  for (auto& f : factors) {
    auto* pf = std::get_if<PlaneFactor>(&f);
    if (pf == nullptr || !fresh.count(pf->pose) || skip.count(pf->pose)) {
      kept.push_back(std::move(f));
      continue;
    }
    const auto& planes = fresh[pf->pose];
    const auto it = planes.find(pf->edge_index);
    if (it == planes.end()) {
      ++report.dropped;
      continue;
    }
    pf->measured = it->second;
    ++report.updated;
    kept.push_back(std::move(f));
  }
  factors = std::move(kept);
  return report;
}

Pose3 predict_pose_constant_velocity(const Pose3& prev, const Pose3& prev2) {
  return prev * (prev2.inverse() * prev);
}

}  // namespace popup
