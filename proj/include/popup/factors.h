#pragma once

// Residuals of the plane-SLAM factors, templated on the scalar so that the
// optimizer can differentiate them with forward-mode automatic differentiation.

#include "popup/geometry.h"
#include "popup/lie.h"
#include "popup/minimal_plane.h"

namespace popup {

template <typename T>
using Vector6 = Eigen::Matrix<T, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

// Pose chart: rotation perturbed on the right, translation additively,
// delta = (omega, v).
template <typename T>
Pose<T> pose_retract(const Pose<T>& x, const Vector6<T>& delta) {
  return Pose<T>(x.R * so3_exp(Vector3<T>(delta.template head<3>())),
                 x.t + Vector3<T>(delta.template tail<3>()));
}

inline Eigen::Matrix<double, 6, 1> pose_local(const Pose3& x, const Pose3& y) {
  Eigen::Matrix<double, 6, 1> d;
  d << so3_log(Eigen::Matrix3d(x.R.transpose() * y.R)), y.t - x.t;
  return d;
}

template <typename T>
Vector6<T> prior_error(const Pose<T>& x, const Pose3& measured) {
  Vector6<T> e;
  e << so3_log(Matrix3<T>(measured.R.template cast<T>().transpose() * x.R)),
      x.t - measured.t.template cast<T>();
  return e;
}

// Relative motion x_i^-1 x_j compared with the measured relative pose.
template <typename T>
Vector6<T> odometry_error(const Pose<T>& xi, const Pose<T>& xj, const Pose3& relative) {
  const Matrix3<T> rel_r = xi.R.transpose() * xj.R;
  const Vector3<T> rel_t = xi.R.transpose() * (xj.t - xi.t);
  Vector6<T> e;
  e << so3_log(Matrix3<T>(relative.R.template cast<T>().transpose() * rel_r)),
      rel_t - relative.t.template cast<T>();
  return e;
}

// Tangent-space difference log(q_meas^-1 * q_pred) between the measured
// camera-frame plane and the world landmark predicted into the camera.
template <typename T>
Vector3<T> plane_error(const Pose<T>& x, const Vector4<T>& landmark_q, const Plane& measured) {
  const HomogeneousPlane<T> predicted = transform_plane(quaternion_to_plane(landmark_q), x.inverse());
  const Vector4<T> q_pred = plane_to_quaternion(predicted);
  const Vector4<T> q_meas = plane_to_quaternion(measured).template cast<T>();
  return quat_log(quat_mul(quat_conj(q_meas), q_pred));
}

inline Eigen::Vector3d plane_factor_error(const Pose3& pose, const MinimalPlane& landmark, const Plane& measured) {
  return plane_error(pose, Eigen::Vector4d(landmark.coeffs()), measured);
}

}  // namespace popup
