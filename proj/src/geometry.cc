#include "popup/geometry.h"

#include <Eigen/SVD>
#include <array>

namespace popup {

Eigen::Matrix3d rotation_from_vanishing_points(const Eigen::Vector3d& v1, const Eigen::Vector3d& v2,
                                               const Eigen::Vector3d& v3, const Intrinsics& k) {
  const std::array<Eigen::Vector3d, 3> vps{v1, v2, v3};
  Eigen::Matrix3d m;  // columns: world axes expressed in the camera frame
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d dir = k.unproject(vps[i]);
    const double len = dir.norm();
    if (!(len > 0.0) || !std::isfinite(len)) {
      throw Error(ErrorCode::DegenerateVanishingPoints, "vanishing point has no direction");
    }
    m.col(i) = dir / len;
  }
  const double cos_limit = std::cos(1.0 * M_PI / 180.0);
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      if (std::abs(m.col(i).dot(m.col(j))) > cos_limit) {
        throw Error(ErrorCode::DegenerateVanishingPoints, "vanishing directions nearly parallel");
      }
    }
  }
  // R_wc = M^T, so the camera forward axis in world is row 2 of M.
  if (m(2, 0) < 0.0) m.col(0) = -m.col(0);
  if (m.determinant() < 0.0) m.col(1) = -m.col(1);

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d nearest = svd.matrixU() * svd.matrixV().transpose();
  if (nearest.determinant() < 0.0) {
    Eigen::Matrix3d u = svd.matrixU();
    u.col(2) = -u.col(2);
    nearest = u * svd.matrixV().transpose();
  }
  return nearest.transpose();
}

}  // namespace popup
