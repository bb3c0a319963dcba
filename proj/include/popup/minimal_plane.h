#pragma once

// Unit-quaternion chart of a plane, q = (n, d) / |(n, d)|, updated on the
// 3-sphere by left multiplication with exp(delta).

#include "popup/geometry.h"
#include "popup/lie.h"

namespace popup {

template <typename T>
Vector4<T> plane_to_quaternion(const HomogeneousPlane<T>& plane) {
  const Vector4<T> c = plane.coeffs();
  return c / c.norm();
}

template <typename T>
HomogeneousPlane<T> quaternion_to_plane(const Vector4<T>& q) {
  return HomogeneousPlane<T>(Vector3<T>(q.template head<3>()), q(3));
}

class MinimalPlane {
 public:
  MinimalPlane() : q_(0.0, 0.0, 1.0, 0.0) {}
  // Normalizes and canonicalizes the sign of q.
  explicit MinimalPlane(const Eigen::Vector4d& q);

  static MinimalPlane from_plane(const Plane& plane) { return MinimalPlane(plane_to_quaternion(plane)); }
  Plane to_plane() const { return quaternion_to_plane(q_); }

  const Eigen::Vector4d& coeffs() const { return q_; }

  // exp(delta) * q.
  MinimalPlane retract(const Eigen::Vector3d& delta) const;
  // Inverse of retract: log(other * q^-1).
  Eigen::Vector3d local(const MinimalPlane& other) const;

 private:
  Eigen::Vector4d q_;
};

inline MinimalPlane plane_to_minimal(const Plane& plane) { return MinimalPlane::from_plane(plane); }
inline Plane from_minimal(const MinimalPlane& q) { return q.to_plane(); }

}  // namespace popup
