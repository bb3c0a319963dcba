#include "popup/sim.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "popup/lie.h"

namespace popup {

namespace {

using Vec2 = Eigen::Vector2d;

Vec2 rotate(const Vec2& v, double a) {
  return {std::cos(a) * v.x() - std::sin(a) * v.y(), std::sin(a) * v.x() + std::cos(a) * v.y()};
}

Vec2 left_of(const Vec2& d) { return {-d.y(), d.x()}; }

// Intersection of p1 + a d1 with p2 + b d2.
Vec2 intersect_lines(const Vec2& p1, const Vec2& d1, const Vec2& p2, const Vec2& d2) {
  Eigen::Matrix2d m;
  m << d1, -d2;
  const Eigen::Vector2d ab = m.partialPivLu().solve(p2 - p1);
  return p1 + ab(0) * d1;
}

Pose3 pose_at(const Vec2& xy, double heading, double height) {
  const Eigen::Vector3d forward(std::cos(heading), std::sin(heading), 0.0);
  const Eigen::Vector3d right(std::sin(heading), -std::cos(heading), 0.0);
  Eigen::Matrix3d r;
  r.col(0) = right;
  r.col(1) = -Eigen::Vector3d::UnitZ();
  r.col(2) = forward;
  return Pose3(r, Eigen::Vector3d(xy.x(), xy.y(), height));
}

struct Wall2 {
  Vec2 a;
  Vec2 b;
};

std::vector<Wall2> wall_bottoms(const ScenarioTruth& truth) {
  std::vector<Wall2> out;
  for (const auto& p : truth.planes) {
    if (p.label == PlaneLabel::Wall && p.polygon.size() >= 2) {
      out.push_back({p.polygon[0].head<2>(), p.polygon[1].head<2>()});
    }
  }
  return out;
}

bool occluded(const Vec2& c, const Vec2& p, const std::vector<Wall2>& walls, std::size_t self) {
  const Vec2 d = p - c;
  for (std::size_t j = 0; j < walls.size(); ++j) {
    if (j == self) continue;
    const Vec2 e = walls[j].b - walls[j].a;
    const double den = d.x() * e.y() - d.y() * e.x();
    if (std::abs(den) < 1e-15) continue;
    const Vec2 w = walls[j].a - c;
    const double s = (w.x() * e.y() - w.y() * e.x()) / den;
    const double u = (w.x() * d.y() - w.y() * d.x()) / den;
    if (s > 1e-9 && s < 1.0 - 1e-9 && u >= -1e-12 && u <= 1.0 + 1e-12) return true;
  }
  return false;
}

// Parameter intervals of wall `i` visible from `c`.
std::vector<std::pair<double, double>> visible_intervals(const Vec2& c, const std::vector<Wall2>& walls,
                                                         std::size_t i) {
  const Wall2& w = walls[i];
  const auto vis = [&](double t) { return !occluded(c, w.a + t * (w.b - w.a), walls, i); };
  const int n = std::clamp(static_cast<int>(std::ceil((w.b - w.a).norm() / 0.05)), 16, 4000);
  std::vector<std::pair<double, double>> out;
  bool prev = vis(0.0);
  double start = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double t = static_cast<double>(k) / n;
    const bool cur = vis(t);
    if (cur != prev) {
      double lo = static_cast<double>(k - 1) / n;
      double hi = t;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (vis(mid) == prev ? lo : hi) = mid;
      }
      const double edge = prev ? lo : hi;
      if (prev) {
        out.emplace_back(start, edge);
      } else {
        start = edge;
      }
      prev = cur;
    }
  }
  if (prev) out.emplace_back(start, 1.0);
  return out;
}

// Liang-Barsky clip against [0, w] x [0, h].
bool clip_to_image(Vec2& p, Vec2& q, double w, double h) {
  const Vec2 d = q - p;
  double t0 = 0.0, t1 = 1.0;
  const double ps[4] = {-d.x(), d.x(), -d.y(), d.y()};
  const double qs[4] = {p.x(), w - p.x(), p.y(), h - p.y()};
  for (int i = 0; i < 4; ++i) {
    if (ps[i] == 0.0) {
      if (qs[i] < 0.0) return false;
      continue;
    }
    const double r = qs[i] / ps[i];
    if (ps[i] < 0.0) {
      t0 = std::max(t0, r);
    } else {
      t1 = std::min(t1, r);
    }
    if (t0 > t1) return false;
  }
  const Vec2 p0 = p + t0 * d;
  q = p + t1 * d;
  p = p0;
  return true;
}

constexpr double kNearPlane = 0.1;

std::optional<std::pair<Vec2, Vec2>> project_segment(Eigen::Vector3d a, Eigen::Vector3d b, const ScenarioTruth& truth) {
  if (a.z() < kNearPlane && b.z() < kNearPlane) return std::nullopt;
  if (a.z() < kNearPlane) std::swap(a, b);
  if (b.z() < kNearPlane) b = a + (kNearPlane - a.z()) / (b.z() - a.z()) * (b - a);
  Vec2 pa = truth.k.project(a);
  Vec2 pb = truth.k.project(b);
  if (!clip_to_image(pa, pb, truth.width, truth.height)) return std::nullopt;
  return std::make_pair(pa, pb);
}

std::mt19937_64 stream(std::uint64_t seed, std::size_t frame, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(frame), purpose};
  return std::mt19937_64(seq);
}

struct PlaneRaycaster {
  Eigen::Vector3d n;
  double d;
  bool bounded;
  Eigen::Vector3d u, v;
  std::vector<Vec2> poly;
};

PlaneRaycaster make_raycaster(const MapPlane& p) {
  PlaneRaycaster r;
  r.n = p.plane.normal();
  r.d = p.plane.offset();
  r.bounded = p.label == PlaneLabel::Wall && p.polygon.size() >= 3;
  r.u = r.n.unitOrthogonal();
  r.v = r.n.cross(r.u);
  for (const auto& q : p.polygon) r.poly.emplace_back(q.dot(r.u), q.dot(r.v));
  return r;
}

bool inside_convex(const std::vector<Vec2>& poly, const Vec2& p) {
  int sign = 0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 e = poly[(i + 1) % poly.size()] - poly[i];
    const Vec2 w = p - poly[i];
    const double c = e.x() * w.y() - e.y() * w.x();
    if (std::abs(c) < 1e-12) continue;
    const int s = c > 0 ? 1 : -1;
    if (sign == 0) sign = s;
    if (s != sign) return false;
  }
  return true;
}

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 e = b - a;
  const double len2 = e.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - a).dot(e) / len2, 0.0, 1.0) : 0.0;
  return (a + t * e - p).norm();
}

// Distance from a point to a bounded plane; unbounded for the ground.
double distance_to_plane_patch(const MapPlane& m, const Eigen::Vector3d& p) {
  const double sd = m.plane.signed_distance(p);
  if (m.label != PlaneLabel::Wall || m.polygon.size() < 3) return std::abs(sd);
  const PlaneRaycaster r = make_raycaster(m);
  const Vec2 q(p.dot(r.u), p.dot(r.v));
  if (inside_convex(r.poly, q)) return std::abs(sd);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < r.poly.size(); ++i) {
    best = std::min(best, point_segment_distance(q, r.poly[i], r.poly[(i + 1) % r.poly.size()]));
  }
  return std::hypot(sd, best);
}

MapPlane transformed(const MapPlane& m, const Pose3& t) {
  MapPlane out{transform_plane(m.plane, t), m.label, {}};
  for (const auto& p : m.polygon) out.polygon.push_back(t * p);
  return out;
}

}  // namespace

CorridorSpec CorridorSpec::straight(double length, double width) {
  CorridorSpec s;
  s.lengths = {length};
  s.widths = {width};
  return s;
}

CorridorSpec CorridorSpec::square_loop(double side, double width) {
  CorridorSpec s;
  s.lengths = {side, side, side, side};
  s.widths = {width};
  s.turns_deg = {90.0, 90.0, 90.0, 90.0};
  s.loop = true;
  s.start_offset = 0.8 * side;
  return s;
}

NoiseModel NoiseModel::noiseless(std::uint64_t seed) {
  NoiseModel n;
  n.pixel_sigma = 0.0;
  n.odom_trans_sigma = 0.0;
  n.odom_rot_sigma = 0.0;
  n.seed = seed;
  return n;
}

void NoiseModel::validate() const {
  if (pixel_sigma < 0 || odom_trans_sigma < 0 || odom_rot_sigma < 0 || split_gap < 0 || clutter_per_frame < 0 ||
      split_probability < 0 || split_probability > 1) {
    throw Error(ErrorCode::InvalidSpec, "noise parameters must be nonnegative");
  }
}

ScenarioTruth generate_corridor(const CorridorSpec& spec, double frame_spacing) {
  const std::size_t n = spec.lengths.size();
  const auto invalid = [](const std::string& msg) { return Error(ErrorCode::InvalidSpec, msg); };
  if (n == 0) throw invalid("corridor needs at least one segment");
  if (!(frame_spacing > 0)) throw invalid("frame spacing must be positive");
  if (spec.widths.size() != 1 && spec.widths.size() != n) throw invalid("widths must have 1 or one-per-segment entries");
  if (spec.turns_deg.size() != (spec.loop ? n : n - 1)) throw invalid("wrong number of turns");
  for (double l : spec.lengths) {
    if (!(l > 0)) throw invalid("segment lengths must be positive");
  }
  for (double w : spec.widths) {
    if (!(w > 0)) throw invalid("corridor widths must be positive");
  }
  for (double t : spec.turns_deg) {
    if (std::abs(std::abs(t) - 90.0) > 1e-9) throw invalid("turns must be +-90 degrees");
  }
  if (!(spec.camera_height > 0) || !(spec.wall_height > spec.camera_height)) {
    throw invalid("walls must be taller than the camera height, which must be positive");
  }
  if (!(spec.max_turn_step_deg > 0) || spec.end_margin < 0 || spec.width <= 0 || spec.height <= 0) {
    throw invalid("invalid turn step, margin or image size");
  }
  if (spec.start_offset < 0 || spec.start_offset >= spec.lengths[0] || (!spec.loop && spec.start_offset != 0)) {
    throw invalid("start offset must lie on the first segment of a loop");
  }
  const auto width_of = [&](std::size_t i) { return spec.widths.size() == 1 ? spec.widths[0] : spec.widths[i]; };

  std::vector<Vec2> starts{Vec2::Zero()};
  std::vector<Vec2> dirs{Vec2::UnitX()};
  std::vector<double> headings{0.0};
  for (std::size_t i = 0; i < n; ++i) {
    starts.push_back(starts.back() + spec.lengths[i] * dirs.back());
    if (i < spec.turns_deg.size()) {
      const double turn = spec.turns_deg[i] * M_PI / 180.0;
      headings.push_back(headings.back() + turn);
      dirs.push_back(rotate(Vec2::UnitX(), headings.back()));
    }
  }
  if (spec.loop) {
    if ((starts[n] - starts[0]).norm() > 1e-6 || (dirs[n] - dirs[0]).norm() > 1e-6) {
      throw invalid("loop corridor does not close");
    }
  }

  ScenarioTruth truth;
  truth.k = spec.k;
  truth.width = spec.width;
  truth.height = spec.height;
  truth.loop = spec.loop;
  truth.planes.push_back({Plane(Eigen::Vector3d::UnitZ(), 0.0), PlaneLabel::Ground, {}});

  Vec2 lo = Vec2::Constant(std::numeric_limits<double>::infinity());
  Vec2 hi = -lo;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 d = dirs[i];
    const Vec2 l = left_of(d);
    const bool has_prev = i > 0 || spec.loop;
    const bool has_next = i + 1 < n || spec.loop;
    const std::size_t prev = (i + n - 1) % n;
    const std::size_t next = (i + 1) % n;
    for (double side : {1.0, -1.0}) {
      const Vec2 q = starts[i] + side * 0.5 * width_of(i) * l;
      const Vec2 a = has_prev ? intersect_lines(q, d, starts[prev] + side * 0.5 * width_of(prev) * left_of(dirs[prev]),
                                                dirs[prev])
                              : Vec2(q - spec.end_margin * d);
      const Vec2 qn = starts[i + 1] + side * 0.5 * width_of(i) * l;
      const Vec2 b = has_next ? intersect_lines(qn, d, starts[next] + side * 0.5 * width_of(next) * left_of(dirs[next]),
                                                dirs[next])
                              : Vec2(qn + spec.end_margin * d);
      if ((b - a).dot(d) < 1e-6) throw invalid("segment too short for its corridor width");
      const Eigen::Vector3d a0(a.x(), a.y(), 0.0), b0(b.x(), b.y(), 0.0);
      const Eigen::Vector3d up = spec.wall_height * Eigen::Vector3d::UnitZ();
      const Eigen::Vector3d normal(l.x(), l.y(), 0.0);
      truth.planes.push_back({Plane(normal, -normal.dot(a0)), PlaneLabel::Wall, {a0, b0, b0 + up, a0 + up}});
      lo = lo.cwiseMin(a).cwiseMin(b);
      hi = hi.cwiseMax(a).cwiseMax(b);
    }
  }
  truth.planes.front().polygon = {{lo.x(), lo.y(), 0.0}, {hi.x(), lo.y(), 0.0}, {hi.x(), hi.y(), 0.0},
                                  {lo.x(), hi.y(), 0.0}};

  const auto straight = [&](std::size_t i, double from, double to) {
    const double len = to - from;
    if (len <= 0) return;
    const int steps = std::max(1, static_cast<int>(std::ceil(len / frame_spacing - 1e-9)));
    for (int k = 1; k <= steps; ++k) {
      const Vec2 p = starts[i] + (from + len * k / steps) * dirs[i];
      truth.trajectory.push_back(pose_at(p, headings[i], spec.camera_height));
      truth.path_length += len / steps;
    }
  };
  const auto turn_at = [&](std::size_t i) {
    const double turn = spec.turns_deg[i] * M_PI / 180.0;
    const int steps = static_cast<int>(std::ceil(std::abs(spec.turns_deg[i]) / spec.max_turn_step_deg - 1e-9));
    for (int k = 1; k <= steps; ++k) {
      truth.trajectory.push_back(pose_at(starts[i + 1], headings[i] + turn * k / steps, spec.camera_height));
    }
  };

  const double offset = spec.loop ? spec.start_offset : 0.0;
  truth.trajectory.push_back(pose_at(starts[0] + offset * dirs[0], headings[0], spec.camera_height));
  for (std::size_t i = 0; i < n; ++i) {
    straight(i, i == 0 ? offset : 0.0, spec.lengths[i]);
    if (i < spec.turns_deg.size()) turn_at(i);
  }
  straight(0, 0.0, offset);
  return truth;
}

FrameObservation render_frame(const ScenarioTruth& truth, std::size_t frame, const NoiseModel& noise) {
  if (frame >= truth.trajectory.size()) {
    throw Error(ErrorCode::PreconditionViolation, "frame index out of range");
  }
  noise.validate();
  const Pose3& pose = truth.trajectory[frame];
  const Pose3 w2c = pose.inverse();
  const Vec2 c = pose.t.head<2>();
  const std::vector<Wall2> walls = wall_bottoms(truth);

  FrameObservation obs;
  std::vector<std::pair<Vec2, Vec2>> pieces;
  for (std::size_t i = 0; i < walls.size(); ++i) {
    for (const auto& [t0, t1] : visible_intervals(c, walls, i)) {
      const Vec2 a = walls[i].a + t0 * (walls[i].b - walls[i].a);
      const Vec2 b = walls[i].a + t1 * (walls[i].b - walls[i].a);
      const auto seg = project_segment(w2c * Eigen::Vector3d(a.x(), a.y(), 0.0),
                                       w2c * Eigen::Vector3d(b.x(), b.y(), 0.0), truth);
      if (seg && (seg->second - seg->first).norm() >= 2.0) pieces.push_back(*seg);
    }
  }
  std::sort(pieces.begin(), pieces.end(), [](const auto& p, const auto& q) {
    return std::min(p.first.x(), p.second.x()) < std::min(q.first.x(), q.second.x());
  });
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    obs.true_edges.emplace_back(pieces[i].first, pieces[i].second, static_cast<int>(i));
  }
  for (const auto& e : obs.true_edges) {
    obs.boundary.push_back(e.a());
    obs.boundary.push_back(e.b());
  }
  std::stable_sort(obs.boundary.begin(), obs.boundary.end(), [](const Vec2& a, const Vec2& b) { return a.x() < b.x(); });
  // Beyond the outermost edges the ground reaches the image border.
  if (!obs.boundary.empty()) {
    if (obs.boundary.front().x() > 0.0) obs.boundary.insert(obs.boundary.begin(), Vec2(0.0, obs.boundary.front().y()));
    if (obs.boundary.back().x() < truth.width) obs.boundary.emplace_back(truth.width, obs.boundary.back().y());
  }

  std::mt19937_64 rng = stream(noise.seed, frame, 0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::pair<Vec2, Vec2>> noisy;
  for (const auto& e : obs.true_edges) {
    const Vec2 dir = (e.b() - e.a()).normalized();
    if (e.length() > 4.0 * noise.split_gap + 20.0 && unit(rng) < noise.split_probability) {
      const Vec2 m = e.a() + (0.3 + 0.4 * unit(rng)) * (e.b() - e.a());
      noisy.emplace_back(e.a(), m - 0.5 * noise.split_gap * dir);
      noisy.emplace_back(m + 0.5 * noise.split_gap * dir, e.b());
    } else {
      noisy.emplace_back(e.a(), e.b());
    }
  }
  for (auto& [a, b] : noisy) {
    a += noise.pixel_sigma * Vec2(gauss(rng), gauss(rng));
    b += noise.pixel_sigma * Vec2(gauss(rng), gauss(rng));
  }
  if (obs.boundary.size() >= 2) {
    const BoundaryCurve xi(obs.boundary);
    for (int k = 0; k < noise.clutter_per_frame; ++k) {
      const double len = 30.0 + 60.0 * unit(rng);
      const double x0 = xi.x_min() + (xi.x_max() - xi.x_min()) * unit(rng);
      const double x1 = std::min(x0 + len, xi.x_max());
      const double y = std::min(xi.y_at(x0), xi.y_at(x1)) - 40.0 - 120.0 * unit(rng);
      const double tilt = 10.0 * (unit(rng) - 0.5);
      if (x1 - x0 < 10.0 || y - std::abs(tilt) < 1.0) continue;
      noisy.emplace_back(Vec2(x0, y - tilt), Vec2(x1, y + tilt));
    }
  }
  for (const auto& [a, b] : noisy) {
    if ((b - a).norm() < 1e-6) continue;
    obs.edges.emplace_back(a, b, static_cast<int>(obs.edges.size()));
  }

  if (frame > 0) {
    const Pose3 rel = truth.trajectory[frame - 1].inverse() * pose;
    std::mt19937_64 orng = stream(noise.seed, frame, 1);
    Eigen::Vector3d w(gauss(orng), gauss(orng), gauss(orng));
    Eigen::Vector3d v(gauss(orng), gauss(orng), gauss(orng));
    if (noise.planar_odometry) {
      // Expressed in the previous camera frame; its y axis is the world vertical.
      const Eigen::Matrix3d& r = truth.trajectory[frame - 1].R;
      const Eigen::Vector3d up_c = r.transpose() * Eigen::Vector3d::UnitZ();
      w = w.dot(up_c) * up_c;
      v -= v.dot(up_c) * up_c;
    }
    obs.odometry = Pose3(rel.R * so3_exp<double>(noise.odom_rot_sigma * w), rel.t + noise.odom_trans_sigma * v);
  }
  return obs;
}

Raster render_depth(std::span<const MapPlane> planes, const Pose3& pose, const Intrinsics& k, int width, int height,
                    int stride) {
  if (stride < 1 || width <= 0 || height <= 0) {
    throw Error(ErrorCode::DimensionMismatch, "invalid depth raster size");
  }
  std::vector<PlaneRaycaster> casters;
  for (const auto& p : planes) casters.push_back(make_raycaster(p));
  const int w = (width + stride - 1) / stride;
  const int h = (height + stride - 1) / stride;
  Raster out(w, h);
  const Eigen::Vector3d c = pose.t;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d r = k.unproject(Eigen::Vector3d(x * stride, y * stride, 1.0));
      const Eigen::Vector3d dir = pose.R * r;
      double best = std::numeric_limits<double>::infinity();
      for (const auto& pc : casters) {
        const double den = pc.n.dot(dir);
        if (std::abs(den) < 1e-12) continue;
        const double s = -(pc.n.dot(c) + pc.d) / den;
        if (!(s > 1e-9) || s >= best) continue;
        if (pc.bounded) {
          const Eigen::Vector3d hit = c + s * dir;
          if (!inside_convex(pc.poly, Vec2(hit.dot(pc.u), hit.dot(pc.v)))) continue;
        }
        best = s;
      }
      if (std::isfinite(best)) out.at(x, y) = static_cast<float>(best);
    }
  }
  return out;
}

std::vector<double> plane_normal_errors(std::span<const MapPlane> truth, std::span<const MapPlane> estimate) {
  std::vector<double> out;
  for (const auto& e : estimate) {
    Eigen::Vector3d centroid = -e.plane.offset() * e.plane.normal();
    if (!e.polygon.empty()) {
      centroid.setZero();
      for (const auto& p : e.polygon) centroid += p;
      centroid /= static_cast<double>(e.polygon.size());
    }
    double best_cost = std::numeric_limits<double>::infinity();
    double best_angle = M_PI / 2;
    for (const auto& t : truth) {
      if (t.label != e.label) continue;
      const double angle = std::acos(std::clamp(std::abs(e.plane.normal().dot(t.plane.normal())), 0.0, 1.0));
      const double cost = angle + distance_to_plane_patch(t, centroid);
      if (cost < best_cost) {
        best_cost = cost;
        best_angle = angle;
      }
    }
    out.push_back(best_angle);
  }
  return out;
}

EvalReport evaluate(const ScenarioTruth& truth, std::span<const Pose3> estimate, std::span<const MapPlane> map,
                    const EvalOptions& options) {
  const std::size_t n = truth.trajectory.size();
  if (estimate.size() != n) {
    throw Error(ErrorCode::LengthMismatch, "estimated trajectory has " + std::to_string(estimate.size()) +
                                               " poses, truth has " + std::to_string(n));
  }
  if (!options.depth_maps.empty() && options.depth_maps.size() != n) {
    throw Error(ErrorCode::LengthMismatch, "one depth map per frame required");
  }
  EvalReport rep;
  rep.path_length = truth.path_length;
  if (n == 0) return rep;

  const Pose3 align = truth.trajectory[0] * estimate[0].inverse();
  std::vector<Pose3> aligned;
  std::vector<double> errs;
  for (std::size_t i = 0; i < n; ++i) {
    aligned.push_back(align * estimate[i]);
    errs.push_back((aligned.back().t - truth.trajectory[i].t).norm());
  }
  double sum = 0.0;
  for (double e : errs) sum += e;
  rep.ate_mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (double e : errs) var += (e - rep.ate_mean) * (e - rep.ate_mean);
  rep.ate_std = std::sqrt(var / static_cast<double>(n));
  rep.ate_endpoint = errs.back();
  rep.loop_error_percent = truth.path_length > 0 ? 100.0 * rep.ate_endpoint / truth.path_length : 0.0;

  std::vector<MapPlane> aligned_map;
  for (const auto& m : map) aligned_map.push_back(transformed(m, align));
  const std::vector<double> normal_errs = plane_normal_errors(truth.planes, aligned_map);
  if (!normal_errs.empty()) {
    double s = 0.0;
    for (double e : normal_errs) s += e;
    rep.normal_error_deg = s / static_cast<double>(normal_errs.size()) * 180.0 / M_PI;
  }

  const bool have_maps = !options.depth_maps.empty();
  const int step = options.depth_frame_step > 0 ? options.depth_frame_step : (have_maps ? 1 : 0);
  if (step > 0 && (have_maps || !aligned_map.empty())) {
    const int s = std::max(1, options.depth_stride);
    double err_sum = 0.0;
    std::size_t good = 0;
    for (std::size_t f = 0; f < n; f += static_cast<std::size_t>(step)) {
      const Raster gt = render_depth(truth.planes, truth.trajectory[f], truth.k, truth.width, truth.height, s);
      Raster est;
      if (have_maps) {
        const Raster& m = options.depth_maps[f];
        if (m.width != truth.width || m.height != truth.height) {
          throw Error(ErrorCode::DimensionMismatch, "depth map size differs from the image size");
        }
        est = Raster(gt.width, gt.height);
        for (int y = 0; y < gt.height; ++y) {
          for (int x = 0; x < gt.width; ++x) est.at(x, y) = m.at(x * s, y * s);
        }
      } else {
        est = render_depth(aligned_map, aligned[f], truth.k, truth.width, truth.height, s);
      }
      for (std::size_t i = 0; i < gt.data.size(); ++i) {
        if (!std::isfinite(gt.data[i]) || !std::isfinite(est.data[i]) || gt.data[i] > options.max_depth) continue;
        const double e = std::abs(static_cast<double>(est.data[i]) - gt.data[i]);
        err_sum += e;
        good += e < 0.1 ? 1 : 0;
        ++rep.depth_pixels;
      }
    }
    if (rep.depth_pixels > 0) {
      rep.depth_error_mean = err_sum / static_cast<double>(rep.depth_pixels);
      rep.depth_fraction_01 = static_cast<double>(good) / static_cast<double>(rep.depth_pixels);
    }
  }
  return rep;
}

}  // namespace popup
