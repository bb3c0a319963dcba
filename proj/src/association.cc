#include "popup/association.h"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

namespace popup {

namespace {

using Polygon2 = std::vector<Eigen::Vector2d>;

std::pair<Eigen::Vector3d, Eigen::Vector3d> basis_of(const Eigen::Vector3d& n) {
  const Eigen::Vector3d u = n.unitOrthogonal();
  return {u, n.cross(u)};
}

double signed_area(const Polygon2& p) {
  double a = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& s = p[i];
    const auto& t = p[(i + 1) % p.size()];
    a += s.x() * t.y() - t.x() * s.y();
  }
  return 0.5 * a;
}

Polygon2 to_plane_coords(const Plane& plane, std::span<const Eigen::Vector3d> pts) {
  const auto [u, v] = basis_of(plane.normal());
  Polygon2 out;
  out.reserve(pts.size());
  for (const auto& p : pts) out.emplace_back(p.dot(u), p.dot(v));
  return out;
}

double cross(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return (a - o).x() * (b - o).y() - (a - o).y() * (b - o).x();
}

Polygon2 convex_hull(Polygon2 pts) {
  if (pts.size() < 3) return pts;
  std::sort(pts.begin(), pts.end(),
            [](const auto& a, const auto& b) { return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y()); });
  Polygon2 hull(2 * pts.size());
  std::size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0.0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k > 1 ? k - 1 : k);
  return hull;
}

// Sutherland-Hodgman clipping of `subject` by the convex CCW polygon `clip`.
Polygon2 clip_convex(const Polygon2& subject, const Polygon2& clip) {
  Polygon2 out = subject;
  for (std::size_t i = 0; i < clip.size() && !out.empty(); ++i) {
    const Eigen::Vector2d a = clip[i];
    const Eigen::Vector2d b = clip[(i + 1) % clip.size()];
    Polygon2 input;
    input.swap(out);
    for (std::size_t j = 0; j < input.size(); ++j) {
      const Eigen::Vector2d p = input[j];
      const Eigen::Vector2d q = input[(j + 1) % input.size()];
      const double sp = cross(a, b, p);
      const double sq = cross(a, b, q);
      if (sp >= 0.0) out.push_back(p);
      if ((sp >= 0.0) != (sq >= 0.0)) {
        const double t = sp / (sp - sq);
        out.push_back(p + t * (q - p));
      }
    }
  }
  return out;
}

double mean_abs_residual(const Plane& plane, std::span<const Eigen::Vector3d> pts) {
  double s = 0.0;
  for (const auto& p : pts) s += std::abs(plane.signed_distance(p));
  return s;
}

std::vector<int> observed_landmarks(const FactorGraph& graph, int pose_id) {
  std::set<int> ids;
  for (const auto& f : graph.factors()) {
    if (const auto* pf = std::get_if<PlaneFactor>(&f); pf && pf->pose == pose_id) {
      if (graph.landmark(pf->landmark).label == PlaneLabel::Wall) ids.insert(pf->landmark);
    }
  }
  return {ids.begin(), ids.end()};
}

LoopCandidate match_observed(const FactorGraph& graph, int i, int j, const std::vector<int>& at_i,
                             const std::vector<int>& at_j, const AssociationParams& params) {
  LoopCandidate cand{i, j, {}};
  std::vector<std::tuple<double, int, int>> scored;
  for (int a : at_i) {
    const PlaneLandmark& la = graph.landmark(a);
    for (int b : at_j) {
      if (a == b) continue;
      const PlaneLandmark& lb = graph.landmark(b);
      if (la.label != lb.label) continue;
      try {
        const PairScores s = plane_pair_scores(la.minimal.to_plane(), la.polygon, lb.minimal.to_plane(), lb.polygon);
        if (passes_gates(s, params)) scored.emplace_back(weighted_score(s, params), a, b);
      } catch (const Error&) {
      }
    }
  }
  std::sort(scored.begin(), scored.end());
  std::set<int> used;
  for (const auto& [score, a, b] : scored) {
    if (used.count(a) || used.count(b)) continue;
    used.insert(a);
    used.insert(b);
    cand.pairs.emplace_back(a, b);
  }
  return cand;
}

}  // namespace

void AssociationParams::validate() const {
  const double sum = w_angle + w_dist + w_overlap;
  if (w_angle < 0 || w_dist < 0 || w_overlap < 0 || std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidSpec, "association weights must be nonnegative and sum to 1");
  }
  if (!(max_normal_angle > 0) || !(max_plane_dist > 0) || min_overlap_ratio < 0 || min_overlap_ratio > 1) {
    throw Error(ErrorCode::InvalidSpec, "association gates out of range");
  }
}

std::vector<Eigen::Vector3d> project_onto(const Plane& plane, std::span<const Eigen::Vector3d> points) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p - plane.signed_distance(p) * plane.normal());
  return out;
}

PairScores plane_pair_scores(const Plane& a, std::span<const Eigen::Vector3d> polygon_a, const Plane& b,
                             std::span<const Eigen::Vector3d> polygon_b) {
  const Polygon2 pa = convex_hull(to_plane_coords(a, polygon_a));
  if (pa.size() < 3 || std::abs(signed_area(pa)) < 1e-9) {
    throw Error(ErrorCode::DegeneratePolygon, "candidate polygon has no area");
  }
  if (polygon_b.size() < 3 || polygon_area(polygon_b) < 1e-9) {
    throw Error(ErrorCode::DegeneratePolygon, "measurement polygon has no area");
  }
  PairScores s;
  s.angle = std::acos(std::clamp(std::abs(a.normal().dot(b.normal())), 0.0, 1.0));
  s.distance = (mean_abs_residual(b, polygon_a) + mean_abs_residual(a, polygon_b)) /
               static_cast<double>(polygon_a.size() + polygon_b.size());

  const std::vector<Eigen::Vector3d> projected = project_onto(a, polygon_b);
  const Polygon2 pb = convex_hull(to_plane_coords(a, projected));
  const double area_b = pb.size() >= 3 ? std::abs(signed_area(pb)) : 0.0;
  if (area_b < 1e-9) {
    s.overlap = 0.0;
    return s;
  }
  const Polygon2 inter = clip_convex(pb, pa);
  const double area_i = inter.size() >= 3 ? std::abs(signed_area(inter)) : 0.0;
  s.overlap = std::clamp(area_i / std::min(std::abs(signed_area(pa)), area_b), 0.0, 1.0);
  return s;
}

PairScores plane_pair_scores(const PlaneLandmark& candidate, const WorldMeasurement& measurement) {
  return plane_pair_scores(candidate.minimal.to_plane(), candidate.polygon, measurement.plane, measurement.polygon);
}

bool passes_gates(const PairScores& s, const AssociationParams& params) {
  return s.angle <= params.max_normal_angle && s.distance <= params.max_plane_dist &&
         s.overlap >= params.min_overlap_ratio;
}

double weighted_score(const PairScores& s, const AssociationParams& params) {
  return params.w_angle * (s.angle / params.max_normal_angle) + params.w_dist * (s.distance / params.max_plane_dist) +
         params.w_overlap * (1.0 - s.overlap);
}

std::vector<std::optional<int>> associate(std::span<const WorldMeasurement> measurements,
                                          const std::map<int, PlaneLandmark>& landmarks,
                                          const AssociationParams& params, int current_frame) {
  std::vector<std::tuple<double, int, std::size_t>> scored;
  for (std::size_t m = 0; m < measurements.size(); ++m) {
    for (const auto& [id, lm] : landmarks) {
      if (lm.label != measurements[m].label) continue;
      if (params.active_window > 0 && current_frame >= 0 && lm.last_seen >= 0 &&
          current_frame - lm.last_seen > params.active_window) {
        continue;
      }
      try {
        const PairScores s = plane_pair_scores(lm, measurements[m]);
        if (passes_gates(s, params)) scored.emplace_back(weighted_score(s, params), id, m);
      } catch (const Error&) {
      }
    }
  }
  std::sort(scored.begin(), scored.end());
  std::vector<std::optional<int>> out(measurements.size());
  std::set<int> used;
  for (const auto& [score, id, m] : scored) {
    if (out[m] || used.count(id)) continue;
    out[m] = id;
    used.insert(id);
  }
  return out;
}

LoopCandidate match_frames(const FactorGraph& graph, int frame_i, int frame_j, const AssociationParams& params) {
  return match_observed(graph, frame_i, frame_j, observed_landmarks(graph, frame_i),
                        observed_landmarks(graph, frame_j), params);
}

std::vector<LoopCandidate> detect_loop_geometric(const FactorGraph& graph, const LoopParams& loop,
                                                 const AssociationParams& params) {
  std::map<int, std::vector<int>> observed;
  for (const auto& f : graph.factors()) {
    if (const auto* pf = std::get_if<PlaneFactor>(&f)) {
      if (graph.landmark(pf->landmark).label == PlaneLabel::Wall) observed[pf->pose].push_back(pf->landmark);
    }
  }
  for (auto& [id, v] : observed) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }

  // Best candidate per later frame j, then one candidate per run of
  // consecutive revisiting frames.
  AssociationParams gates = params;
  gates.max_plane_dist = std::max(params.max_plane_dist, loop.max_plane_dist);

  std::vector<LoopCandidate> per_frame;
  const auto& poses = graph.poses();
  for (std::size_t jj = 0; jj < poses.size(); ++jj) {
    std::optional<LoopCandidate> best;
    double best_dist = 0.0;
    for (std::size_t ii = 0; ii < jj; ++ii) {
      if (poses[jj].id - poses[ii].id <= loop.gap_min) break;
      const double dist = (poses[jj].pose.t - poses[ii].pose.t).norm();
      if (dist >= loop.radius) continue;
      LoopCandidate c = match_observed(graph, poses[ii].id, poses[jj].id, observed[poses[ii].id],
                                       observed[poses[jj].id], gates);
      if (c.pairs.size() < loop.min_matches) continue;
      if (!best || c.pairs.size() > best->pairs.size() || (c.pairs.size() == best->pairs.size() && dist < best_dist)) {
        best = std::move(c);
        best_dist = dist;
      }
    }
    if (best) per_frame.push_back(std::move(*best));
  }

  std::vector<LoopCandidate> out;
  for (auto& c : per_frame) {
    if (!out.empty() && c.frame_j - out.back().frame_j <= loop.gap_min &&
        std::abs(c.frame_i - out.back().frame_i) <= loop.gap_min) {
      if (c.pairs.size() > out.back().pairs.size()) {
        out.back() = std::move(c);
      }
      continue;
    }
    out.push_back(std::move(c));
  }
  return out;
}

void merge_landmarks(FactorGraph& graph, int keep, int drop) {
  if (keep == drop) {
    throw Error(ErrorCode::PreconditionViolation, "cannot merge a landmark with itself");
  }
  PlaneLandmark& k = graph.landmark(keep);
  const PlaneLandmark& d = graph.landmark(drop);
  if (k.label != d.label) {
    throw Error(ErrorCode::LabelMismatch, "landmarks " + std::to_string(keep) + " and " + std::to_string(drop) +
                                              " have different labels");
  }
  for (auto& f : graph.factors()) {
    if (auto* pf = std::get_if<PlaneFactor>(&f); pf && pf->landmark == drop) pf->landmark = keep;
  }
  const Plane plane = k.minimal.to_plane();
  std::vector<Eigen::Vector3d> pts = k.polygon;
  const auto projected = project_onto(plane, d.polygon);
  pts.insert(pts.end(), projected.begin(), projected.end());
  k.polygon = planar_convex_hull(project_onto(plane, pts), plane.normal());
  k.last_seen = std::max(k.last_seen, d.last_seen);
  graph.landmarks().erase(drop);
}

}  // namespace popup
