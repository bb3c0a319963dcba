#pragma once

#include <Eigen/Geometry>
#include <random>

#include "popup/geometry.h"

namespace popup::testing {

inline Eigen::Matrix3d random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::Quaterniond q(g(rng), g(rng), g(rng), g(rng));
  return q.normalized().toRotationMatrix();
}

inline Eigen::Vector3d random_vector(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Eigen::Vector3d(u(rng), u(rng), u(rng));
}

inline Pose3 random_pose(std::mt19937_64& rng, double scale = 3.0) {
  return Pose3(random_rotation(rng), random_vector(rng, scale));
}

inline Plane random_plane(std::mt19937_64& rng, double max_offset = 5.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(-max_offset, max_offset);
  return Plane(Eigen::Vector3d(g(rng), g(rng), g(rng)), u(rng));
}

// Planes compared as projective entities: (n, d) equal up to global sign.
inline double plane_distance(const Plane& a, const Plane& b) {
  return std::min((a.coeffs() - b.coeffs()).norm(), (a.coeffs() + b.coeffs()).norm());
}

inline double angle_between(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

}  // namespace popup::testing
