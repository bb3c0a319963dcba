#include "popup/minimal_plane.h"

namespace popup {

MinimalPlane::MinimalPlane(const Eigen::Vector4d& q) : q_(q.normalized()) {
  for (int i = 0; i < 4; ++i) {
    if (std::abs(q_(i)) > kSignEpsilon) {
      if (q_(i) < 0.0) q_ = -q_;
      break;
    }
  }
}

MinimalPlane MinimalPlane::retract(const Eigen::Vector3d& delta) const {
  return MinimalPlane(quat_mul(quat_exp(delta), q_));
}

Eigen::Vector3d MinimalPlane::local(const MinimalPlane& other) const {
  return quat_log(quat_mul(other.q_, quat_conj(q_)));
}

}  // namespace popup
