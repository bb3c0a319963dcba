#include <cmath>
#include <random>

#include "doctest.h"
#include "popup/fusion.h"
#include "test_util.h"

using namespace popup;
using namespace popup::testing;

namespace {

const Intrinsics kK{320.0, 320.0, 320.0, 240.0};

double depth_at(const Eigen::Vector2d& u, const Plane& plane) {
  return backproject_to_plane(Eigen::Vector3d(u.x(), u.y(), 1.0), kK, plane).z();
}

// Central-difference propagation of pixel noise into the 3D point.
Eigen::Matrix<double, 3, 2> numeric_point_jacobian(const Eigen::Vector2d& u, const Plane& plane, double h = 1e-4) {
  Eigen::Matrix<double, 3, 2> j;
  for (int c = 0; c < 2; ++c) {
    Eigen::Vector2d du = Eigen::Vector2d::Zero();
    du(c) = h;
    const Eigen::Vector2d up = u + du;
    const Eigen::Vector2d um = u - du;
    j.col(c) = (backproject_to_plane(Eigen::Vector3d(up.x(), up.y(), 1.0), kK, plane) -
                backproject_to_plane(Eigen::Vector3d(um.x(), um.y(), 1.0), kK, plane)) /
               (2.0 * h);
  }
  return j;
}

// Plane in front of the camera, tilted away from fronto-parallel, with a
// pixel whose ray hits it at positive depth.
std::pair<Plane, Eigen::Vector2d> random_setup(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> px(20.0, 620.0), py(20.0, 460.0), depth(1.0, 8.0), tilt(0.2, 1.2);
  std::uniform_real_distribution<double> az(0.0, 2 * M_PI);
  for (;;) {
    const Eigen::Vector2d u(px(rng), py(rng));
    const double t = tilt(rng), a = az(rng);
    const Eigen::Vector3d n(std::sin(t) * std::cos(a), std::sin(t) * std::sin(a), std::cos(t));
    const Eigen::Vector3d r = kK.unproject(Eigen::Vector3d(u.x(), u.y(), 1.0));
    const double z = depth(rng);
    const Eigen::Vector3d p = r * z;
    const Plane plane(n, -n.dot(p));
    if (std::abs(plane.normal().dot(r.normalized())) > 0.2) return {plane, u};
  }
}

Eigen::Matrix2d random_spd(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Matrix2d a;
  a << u(rng), u(rng), u(rng), u(rng);
  return a * a.transpose() + 0.1 * Eigen::Matrix2d::Identity();
}

}  // namespace

TEST_CASE("scalar fusion examples") {
  const DepthHypothesis f = fuse({2.0, 1.0}, {4.0, 1.0});
  CHECK(f.d == 3.0);
  CHECK(f.var == 0.5);

  const DepthHypothesis lsd_only = fuse({2.0, 0.3}, {5.0, kInfiniteVariance});
  CHECK(lsd_only.d == 2.0);
  CHECK(lsd_only.var == 0.3);

  const DepthHypothesis popup_only = fuse({2.0, kInfiniteVariance}, {5.0, 0.7});
  CHECK(popup_only.d == 5.0);
  CHECK(popup_only.var == 0.7);

  CHECK(fuse({3.0, 0.1}, {3.0, 7.0}).d == doctest::Approx(3.0));
}

TEST_CASE("fusion contraction and betweenness") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(0.1, 20.0), v(1e-4, 5.0);
  for (int i = 0; i < 100000; ++i) {
    const DepthHypothesis a{d(rng), v(rng)};
    const DepthHypothesis b{d(rng), v(rng)};
    const DepthHypothesis f = fuse(a, b);
    REQUIRE(f.var < std::min(a.var, b.var));
    REQUIRE(f.d >= std::min(a.d, b.d) - 1e-12);
    REQUIRE(f.d <= std::max(a.d, b.d) + 1e-12);
  }
}

TEST_CASE("pop-up point jacobian matches finite differences") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 100; ++i) {
    const auto [plane, u] = random_setup(rng);
    const Eigen::Matrix<double, 3, 2> ja = popup_point_jacobian(u, kK, plane);
    const Eigen::Matrix<double, 3, 2> jn = numeric_point_jacobian(u, plane);
    CHECK((ja - jn).norm() / jn.norm() < 1e-4);

    const Eigen::Matrix2d s = random_spd(rng);
    const double var = popup_depth_variance(u, kK, plane, s);
    const double var_num = (jn * s * jn.transpose())(2, 2);
    CHECK(std::abs(var - var_num) <= 1e-4 * std::abs(var_num) + 1e-15);
  }
}

TEST_CASE("depth variance basic properties") {
  std::mt19937_64 rng(8);
  const auto [plane, u] = random_setup(rng);
  CHECK(popup_depth_variance(u, kK, plane, Eigen::Matrix2d::Zero()) == 0.0);
  const Eigen::Matrix2d s = random_spd(rng);
  CHECK(popup_depth_variance(u, kK, plane, 2.0 * s) ==
        doctest::Approx(2.0 * popup_depth_variance(u, kK, plane, s)).epsilon(1e-12));

  // A plane at twice the distance seen through the same pixel.
  const Plane far(plane.normal(), 2.0 * plane.offset());
  const double ratio = popup_depth_variance(u, kK, far, Eigen::Matrix2d::Identity()) /
                       popup_depth_variance(u, kK, plane, Eigen::Matrix2d::Identity());
  CHECK(std::abs(ratio - 4.0) < 1e-6);
  CHECK(depth_at(u, far) == doctest::Approx(2.0 * depth_at(u, plane)));

  // A fronto-parallel plane has a pixel-independent depth.
  const Plane fronto(Eigen::Vector3d::UnitZ(), -3.0);
  CHECK(popup_depth_variance({100.0, 50.0}, kK, fronto, Eigen::Matrix2d::Identity()) == doctest::Approx(0.0));

  CHECK_THROWS_AS(popup_depth_variance({320.0, 240.0}, kK, Plane(Eigen::Vector3d::UnitX(), -1.0),
                                       Eigen::Matrix2d::Identity()),
                  Error);
}

TEST_CASE("depth-square law by regression") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> scale(0.2, 10.0);
  for (int setup = 0; setup < 50; ++setup) {
    const auto [plane, u] = random_setup(rng);
    std::vector<double> xs, ys;
    for (int k = 0; k < 20; ++k) {
      const Plane p(plane.normal(), scale(rng) * plane.offset());
      xs.push_back(std::log(depth_at(u, p)));
      ys.push_back(std::log(popup_depth_variance(u, kK, p, Eigen::Matrix2d::Identity())));
    }
    const Eigen::Map<Eigen::VectorXd> x(xs.data(), static_cast<Eigen::Index>(xs.size()));
    const Eigen::Map<Eigen::VectorXd> y(ys.data(), static_cast<Eigen::Index>(ys.size()));
    const Eigen::VectorXd xc = x.array() - x.mean();
    const double slope = xc.dot(y) / xc.squaredNorm();
    CHECK(std::abs(slope - 2.0) < 0.01);
  }
}

TEST_CASE("depth map fusion dispatch") {
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> d(0.5f, 10.0f), v(0.01f, 0.5f);
  std::bernoulli_distribution coin(0.3);

  const int w = 37, h = 23;
  Raster ed(w, h), ev(w, h), pd(w, h), pv(w, h);
  for (std::size_t i = 0; i < ed.data.size(); ++i) {
    ed.data[i] = coin(rng) ? nan : d(rng);
    ev.data[i] = coin(rng) ? std::numeric_limits<float>::infinity() : v(rng);
    pd.data[i] = coin(rng) ? nan : d(rng);
    pv.data[i] = v(rng);
  }
  const double var_max = 0.25;
  const FusedMap out = fuse_depth_map(ed, ev, pd, pv, var_max);
  for (std::size_t i = 0; i < ed.data.size(); ++i) {
    const bool ext_ok = !std::isnan(ed.data[i]) && ev.data[i] <= var_max;
    const bool pop_ok = !std::isnan(pd.data[i]);
    if (!ext_ok && !pop_ok) {
      CHECK(std::isnan(out.depth.data[i]));
    } else if (!ext_ok) {
      CHECK(out.depth.data[i] == pd.data[i]);
      CHECK(out.variance.data[i] == pv.data[i]);
    } else if (!pop_ok) {
      CHECK(out.depth.data[i] == ed.data[i]);
    } else {
      const DepthHypothesis f = fuse({ed.data[i], ev.data[i]}, {pd.data[i], pv.data[i]});
      CHECK(out.depth.data[i] == static_cast<float>(f.d));
      CHECK(out.variance.data[i] == static_cast<float>(f.var));
    }
  }

  // Missing external map passes the pop-up map through.
  const FusedMap pass = fuse_depth_map(Raster(w, h), Raster(w, h), pd, pv, var_max);
  for (std::size_t i = 0; i < pd.data.size(); ++i) {
    if (std::isnan(pd.data[i])) {
      CHECK(std::isnan(pass.depth.data[i]));
    } else {
      CHECK(pass.depth.data[i] == pd.data[i]);
    }
  }

  CHECK_THROWS_AS(fuse_depth_map(ed, ev, Raster(w + 1, h), pv, var_max), Error);
}
