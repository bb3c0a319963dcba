#include <random>
#include <set>

#include "doctest.h"
#include "graph_fixtures.h"
#include "popup/association.h"
#include "popup/optimizer.h"
#include "test_util.h"

using namespace popup;
using namespace popup::testing;

namespace {

// Axis-aligned rectangle lying in the plane x = x0.
std::vector<Eigen::Vector3d> rect_x(double x0, double y0, double y1, double z0 = 0.0, double z1 = 2.5) {
  return {{x0, y0, z0}, {x0, y1, z0}, {x0, y1, z1}, {x0, y0, z1}};
}

std::vector<Eigen::Vector3d> rect_y(double y0, double x0, double x1, double z0 = 0.0, double z1 = 2.5) {
  return {{x0, y0, z0}, {x1, y0, z0}, {x1, y0, z1}, {x0, y0, z1}};
}

WorldMeasurement wall_x(double x0, double y0, double y1) {
  return {Plane(Eigen::Vector3d::UnitX(), -x0), PlaneLabel::Wall, rect_x(x0, y0, y1)};
}

// Rectangle of random size on a random plane.
std::vector<Eigen::Vector3d> random_rect(std::mt19937_64& rng, const Plane& p) {
  const Eigen::Vector3d n = p.normal();
  const Eigen::Vector3d u = n.unitOrthogonal();
  const Eigen::Vector3d v = n.cross(u);
  const Eigen::Vector3d c = -p.offset() * n + random_vector(rng, 1.0).dot(u) * u;
  std::uniform_real_distribution<double> s(0.5, 3.0);
  const double a = s(rng);
  const double b = s(rng);
  return {c - a * u - b * v, c + a * u - b * v, c + a * u + b * v, c - a * u + b * v};
}

}  // namespace

TEST_CASE("pair scores on constructed pairs") {
  const auto poly = rect_x(3.0, -1.0, 1.0);
  const Plane p(Eigen::Vector3d::UnitX(), -3.0);

  const PairScores self = plane_pair_scores(p, poly, p, poly);
  CHECK(self.angle == doctest::Approx(0.0));
  CHECK(self.distance == doctest::Approx(0.0));
  CHECK(self.overlap == doctest::Approx(1.0));

  const PairScores shifted = plane_pair_scores(p, poly, Plane(Eigen::Vector3d::UnitX(), -3.5), rect_x(3.5, -1.0, 1.0));
  CHECK(shifted.angle == doctest::Approx(0.0));
  CHECK(shifted.distance == doctest::Approx(0.5));
  CHECK(shifted.overlap == doctest::Approx(1.0));

  // Half overlap of two equal rectangles.
  const PairScores half = plane_pair_scores(p, poly, p, rect_x(3.0, 0.0, 2.0));
  CHECK(half.overlap == doctest::Approx(0.5));

  // Smaller polygon contained in the larger one.
  const PairScores inside = plane_pair_scores(p, poly, p, rect_x(3.0, -0.2, 0.2, 0.5, 1.0));
  CHECK(inside.overlap == doctest::Approx(1.0));

  const PairScores perp = plane_pair_scores(p, poly, Plane(Eigen::Vector3d::UnitY(), -1.0), rect_y(1.0, 2.0, 4.0));
  CHECK(perp.angle == doctest::Approx(M_PI / 2));
  CHECK_FALSE(passes_gates(perp, AssociationParams{}));

  const std::vector<Eigen::Vector3d> line = {{3, 0, 0}, {3, 1, 0}, {3, 2, 0}};
  CHECK_THROWS_AS(plane_pair_scores(p, poly, p, line), Error);
  CHECK_THROWS_AS(plane_pair_scores(p, line, p, poly), Error);
}

TEST_CASE("pair score symmetry") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const Plane a = random_plane(rng, 3.0);
    const Plane b = random_plane(rng, 3.0);
    const auto pa = random_rect(rng, a);
    const auto pb = random_rect(rng, b);
    const PairScores ab = plane_pair_scores(a, pa, b, pb);
    const PairScores ba = plane_pair_scores(b, pb, a, pa);
    CHECK(std::abs(ab.angle - ba.angle) < 1e-12);
    CHECK(std::abs(ab.distance - ba.distance) < 1e-12);
    CHECK(ab.overlap >= 0.0);
    CHECK(ab.overlap <= 1.0);
  }
}

TEST_CASE("parameter validation") {
  AssociationParams p;
  CHECK_NOTHROW(p.validate());
  p.w_angle = 0.5;
  CHECK_THROWS_AS(p.validate(), Error);
  p.w_angle = -0.2;
  p.w_dist = 1.0;
  CHECK_THROWS_AS(p.validate(), Error);
}

TEST_CASE("associate examples") {
  const AssociationParams params;
  std::map<int, PlaneLandmark> empty;
  const std::vector<WorldMeasurement> ms = {wall_x(3.0, -1.0, 1.0), wall_x(3.2, -1.0, 1.0)};
  for (const auto& m : associate(ms, empty, params)) CHECK_FALSE(m.has_value());

  FactorGraph g;
  const int id = g.add_landmark(PlaneLabel::Wall, ms[0].plane, ms[0].polygon);
  const PairScores exact = plane_pair_scores(g.landmark(id), ms[0]);
  CHECK(weighted_score(exact, params) == doctest::Approx(0.0));

  // Both pass the gates; the exact one wins and the other is new.
  const auto out = associate(ms, g.landmarks(), params);
  REQUIRE(out.size() == 2);
  CHECK(out[0] == id);
  CHECK_FALSE(out[1].has_value());

  // Order of measurements does not change the winner.
  const std::vector<WorldMeasurement> rev = {ms[1], ms[0]};
  const auto out_rev = associate(rev, g.landmarks(), params);
  CHECK_FALSE(out_rev[0].has_value());
  CHECK(out_rev[1] == id);

  // Labels must agree.
  WorldMeasurement ground = ms[0];
  ground.label = PlaneLabel::Ground;
  CHECK_FALSE(associate(std::vector{ground}, g.landmarks(), params)[0].has_value());

  // Ties go to the lowest landmark id.
  const int twin = g.add_landmark(PlaneLabel::Wall, ms[0].plane, ms[0].polygon);
  CHECK(twin > id);
  CHECK(associate(std::vector{ms[0]}, g.landmarks(), params)[0] == id);
}

TEST_CASE("active window limits candidates") {
  AssociationParams params;
  params.active_window = 10;
  std::map<int, PlaneLandmark> lms;
  const WorldMeasurement m = wall_x(3.0, -1.0, 1.0);
  PlaneLandmark lm{0, MinimalPlane::from_plane(m.plane), PlaneLabel::Wall, m.polygon, 5};
  lms.emplace(0, lm);
  CHECK(associate(std::vector{m}, lms, params, 15)[0] == 0);
  CHECK_FALSE(associate(std::vector{m}, lms, params, 16)[0].has_value());
  params.active_window = 0;
  CHECK(associate(std::vector{m}, lms, params, 1000)[0] == 0);
}

TEST_CASE("gating soundness and determinism") {
  std::mt19937_64 rng(5);
  const AssociationParams params;
  for (int trial = 0; trial < 50; ++trial) {
    FactorGraph g;
    for (int k = 0; k < 8; ++k) {
      const Plane p = random_plane(rng, 2.0);
      g.add_landmark(PlaneLabel::Wall, p, random_rect(rng, p));
    }
    std::vector<WorldMeasurement> ms;
    for (int k = 0; k < 6; ++k) {
      const auto& lm = g.landmark(static_cast<int>(rng() % 8));
      // Perturb a landmark so some measurements land within the gates.
      const Eigen::Vector3d n = (lm.minimal.to_plane().normal() + random_vector(rng, 0.3)).normalized();
      const Plane p(n, lm.minimal.to_plane().offset() + random_vector(rng, 0.4).x());
      ms.push_back({p, PlaneLabel::Wall, project_onto(p, lm.polygon)});
    }
    const auto out = associate(ms, g.landmarks(), params);
    CHECK(out == associate(ms, g.landmarks(), params));
    std::set<int> used;
    for (std::size_t m = 0; m < ms.size(); ++m) {
      if (!out[m]) continue;
      CHECK(used.insert(*out[m]).second);
      const PairScores s = plane_pair_scores(g.landmark(*out[m]), ms[m]);
      CHECK(s.angle <= params.max_normal_angle);
      CHECK(s.distance <= params.max_plane_dist);
      CHECK(s.overlap >= params.min_overlap_ratio);
    }
  }
}

TEST_CASE("merge bookkeeping") {
  GraphSpec spec = box_corridor(5);
  FactorGraph g = make_graph(spec);
  const int a = 1;
  // Duplicate of wall 1 observed by two of the poses.
  const int b = g.add_landmark(PlaneLabel::Wall, spec.walls[0], rect_y(-1.5, 0.0, 2.0));
  auto& fs = g.factors();
  int moved = 0;
  for (auto& f : fs) {
    if (auto* pf = std::get_if<PlaneFactor>(&f); pf && pf->landmark == a && pf->pose >= 3) {
      pf->landmark = b;
      ++moved;
    }
  }
  REQUIRE(moved == 2);
  CHECK(g.landmark_degree(a) == 3);
  CHECK(g.landmark_degree(b) == 2);

  const std::size_t factors_before = g.factors().size();
  const std::size_t landmarks_before = g.landmarks().size();
  merge_landmarks(g, a, b);
  CHECK(g.landmark_degree(a) == 5);
  CHECK_FALSE(g.has_landmark(b));
  CHECK(g.factors().size() == factors_before);
  CHECK(g.landmarks().size() == landmarks_before - 1);
  CHECK_NOTHROW(g.validate());

  CHECK_THROWS_AS(merge_landmarks(g, a, *g.ground_id()), Error);
  try {
    merge_landmarks(g, a, *g.ground_id());
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::LabelMismatch);
  }
  try {
    merge_landmarks(g, a, 999);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownLandmark);
  }
  CHECK_THROWS_AS(merge_landmarks(g, a, a), Error);
}

TEST_CASE("merge removes a duplicated wall and keeps the optimum") {
  GraphSpec spec = box_corridor(6);
  FactorGraph g = make_graph(spec);
  const double chi_before = optimize(g).final_chi2;
  const int dup = g.add_landmark(PlaneLabel::Wall, spec.walls[1], rect_y(1.5, 0.0, 2.0));
  for (auto& f : g.factors()) {
    if (auto* pf = std::get_if<PlaneFactor>(&f); pf && pf->landmark == 2 && pf->pose % 2 == 0) pf->landmark = dup;
  }
  merge_landmarks(g, 2, dup);
  CHECK(g.chi2() == doctest::Approx(chi_before).epsilon(1e-9));
  const double after = optimize(g).final_chi2;
  CHECK(after <= chi_before + 1e-12);
}

namespace {

// Out-and-back trajectory along a corridor. Walls seen on the way back are
// fresh copies so a loop detector has something to merge.
FactorGraph out_and_back(bool reuse_planes, bool disjoint_return) {
  FactorGraph g;
  const int ground = g.add_landmark(PlaneLabel::Ground, Plane(Eigen::Vector3d::UnitZ(), 0.0),
                                    {{0, -2, 0}, {20, -2, 0}, {20, 2, 0}, {0, 2, 0}});
  const int left = g.add_landmark(PlaneLabel::Wall, Plane(Eigen::Vector3d::UnitY(), -1.5), rect_y(1.5, 0.0, 6.0));
  const int right = g.add_landmark(PlaneLabel::Wall, Plane(Eigen::Vector3d::UnitY(), 1.5), rect_y(-1.5, 0.0, 6.0));
  int left2 = left;
  int right2 = right;
  if (!reuse_planes) {
    const double x0 = disjoint_return ? 10.0 : 0.5;
    left2 = g.add_landmark(PlaneLabel::Wall, Plane(Eigen::Vector3d::UnitY(), -1.5), rect_y(1.5, x0, x0 + 5.0));
    right2 = g.add_landmark(PlaneLabel::Wall, Plane(Eigen::Vector3d::UnitY(), 1.5), rect_y(-1.5, x0, x0 + 5.0));
  }
  const Matrix6d odo = Matrix6d::Identity() * 1e-4;
  const Eigen::Matrix3d pc = Eigen::Matrix3d::Identity() * 4e-4;
  const int n = 60;
  for (int i = 0; i < n; ++i) {
    const double x = i < n / 2 ? 0.2 * i : 0.2 * (n - 1 - i);
    const Pose3 pose(look_along_x(), Eigen::Vector3d(x, 0.0, 1.0));
    g.add_pose(i, pose);
    if (i == 0) g.add_factor(PriorPoseFactor{0, pose, Matrix6d::Identity() * 1e-6});
    if (i > 0) g.add_factor(OdometryFactor{i - 1, i, g.pose(i - 1).inverse() * pose, odo});
    const Pose3 w2c = pose.inverse();
    g.add_factor(PlaneFactor{i, ground, transform_plane(g.landmark(ground).minimal.to_plane(), w2c), pc, -1});
    const bool back = i >= n / 2;
    for (int id : {back ? left2 : left, back ? right2 : right}) {
      g.add_factor(PlaneFactor{i, id, transform_plane(g.landmark(id).minimal.to_plane(), w2c), pc, 0});
    }
  }
  return g;
}

}  // namespace

TEST_CASE("geometric loop detection") {
  const LoopParams loop;
  const AssociationParams params;

  // Shared landmarks: nothing to merge.
  CHECK(detect_loop_geometric(out_and_back(true, false), loop, params).empty());

  // Straight trajectory without a revisit.
  FactorGraph straight = make_graph(box_corridor(40));
  CHECK(detect_loop_geometric(straight, loop, params).empty());

  FactorGraph g = out_and_back(false, false);
  const auto cands = detect_loop_geometric(g, loop, params);
  REQUIRE(cands.size() == 1);
  CHECK(cands[0].frame_j - cands[0].frame_i > loop.gap_min);
  CHECK(cands[0].pairs.size() == 2);
  for (const auto& [a, b] : cands[0].pairs) {
    CHECK(a != b);
    CHECK(g.landmark(a).label == g.landmark(b).label);
  }
  for (const auto& [a, b] : cands[0].pairs) merge_landmarks(g, std::min(a, b), std::max(a, b));
  CHECK_NOTHROW(g.validate());
  CHECK(detect_loop_geometric(g, loop, params).empty());

  // Poses are close, but the planes seen on return do not overlap the old ones.
  CHECK(detect_loop_geometric(out_and_back(false, true), loop, params).empty());
}
