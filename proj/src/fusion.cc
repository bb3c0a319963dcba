#include "popup/fusion.h"

#include <cmath>

namespace popup {

namespace {

bool present(float d, float var) { return std::isfinite(d) && d > 0.0f && !std::isnan(var); }

DepthHypothesis hypothesis(float d, float var) {
  return {static_cast<double>(d), std::isfinite(var) ? static_cast<double>(var) : kInfiniteVariance};
}

constexpr float kMissing = std::numeric_limits<float>::quiet_NaN();

}  // namespace

DepthHypothesis fuse(const DepthHypothesis& lsd, const DepthHypothesis& popup) {
  if (lsd.is_infinite()) return popup;
  if (popup.is_infinite()) return lsd;
  const double s = lsd.var + popup.var;
  if (s <= 0.0) return {0.5 * (lsd.d + popup.d), 0.0};
  return {(lsd.var * popup.d + popup.var * lsd.d) / s, lsd.var * popup.var / s};
}

Eigen::Matrix<double, 3, 2> popup_point_jacobian(const Eigen::Vector2d& u, const Intrinsics& k, const Plane& plane) {
  const Eigen::Vector3d uh(u.x(), u.y(), 1.0);
  backproject_to_plane(uh, k, plane);  // precondition check
  const Eigen::Vector3d r = k.unproject(uh);
  const Eigen::Vector3d& n = plane.normal();
  const double nr = n.dot(r);
  Eigen::Matrix<double, 3, 2> dr = Eigen::Matrix<double, 3, 2>::Zero();
  dr(0, 0) = 1.0 / k.fx;
  dr(1, 1) = 1.0 / k.fy;
  // p = -d r / (n.r)
  const Eigen::RowVector2d dnr = n.transpose() * dr;
  return -plane.offset() * (dr * nr - r * dnr) / (nr * nr);
}

Eigen::Matrix3d popup_point_covariance(const Eigen::Vector2d& u, const Intrinsics& k, const Plane& plane,
                                       const Eigen::Matrix2d& sigma_u) {
  const Eigen::Matrix<double, 3, 2> j = popup_point_jacobian(u, k, plane);
  return j * sigma_u * j.transpose();
}

double popup_depth_variance(const Eigen::Vector2d& u, const Intrinsics& k, const Plane& plane,
                            const Eigen::Matrix2d& sigma_u) {
  return popup_point_covariance(u, k, plane, sigma_u)(2, 2);
}

Raster::Raster(int w, int h, float fill) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {
  if (w < 0 || h < 0) throw Error(ErrorCode::DimensionMismatch, "negative raster size");
}

DepthHypothesis fuse_pixel(float ext_d, float ext_var, float pop_d, float pop_var, double var_max) {
  const bool has_pop = present(pop_d, pop_var);
  const bool ext_ok = present(ext_d, ext_var) && static_cast<double>(ext_var) <= var_max;
  if (!ext_ok) {
    return has_pop ? hypothesis(pop_d, pop_var) : DepthHypothesis{std::nan(""), kInfiniteVariance};
  }
  if (!has_pop) return hypothesis(ext_d, ext_var);
  return fuse(hypothesis(ext_d, ext_var), hypothesis(pop_d, pop_var));
}

FusedMap fuse_depth_map(const Raster& external_depth, const Raster& external_var, const Raster& popup_depth,
                        const Raster& popup_var, double var_max) {
  if (!external_depth.same_shape(external_var) || !external_depth.same_shape(popup_depth) ||
      !external_depth.same_shape(popup_var)) {
    throw Error(ErrorCode::DimensionMismatch, "depth and variance rasters differ in size");
  }
  FusedMap out{Raster(external_depth.width, external_depth.height), Raster(external_depth.width, external_depth.height)};
  for (std::size_t i = 0; i < external_depth.data.size(); ++i) {
    const DepthHypothesis h =
        fuse_pixel(external_depth.data[i], external_var.data[i], popup_depth.data[i], popup_var.data[i], var_max);
    if (std::isnan(h.d)) {
      out.depth.data[i] = kMissing;
      out.variance.data[i] = kMissing;
    } else {
      out.depth.data[i] = static_cast<float>(h.d);
      out.variance.data[i] = static_cast<float>(h.var);
    }
  }
  return out;
}

}  // namespace popup
