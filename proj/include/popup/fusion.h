#pragma once

// Per-pixel depth fusion of an external depth estimate with the pop-up
// plane model, with first-order pixel-noise propagation.

#include <limits>
#include <vector>

#include "popup/geometry.h"

namespace popup {

inline constexpr double kInfiniteVariance = std::numeric_limits<double>::infinity();
inline constexpr double kDefaultMaxVariance = 0.25;

struct DepthHypothesis {
  double d = 0.0;
  double var = kInfiniteVariance;

  bool is_infinite() const { return !(var < kInfiniteVariance); }
};

// Product of two Gaussians; an infinite input defers to the other one.
DepthHypothesis fuse(const DepthHypothesis& lsd, const DepthHypothesis& popup);

// d p_c / d u for the intersection of pixel u's ray with a camera-frame plane.
Eigen::Matrix<double, 3, 2> popup_point_jacobian(const Eigen::Vector2d& u, const Intrinsics& k, const Plane& plane);

// J_u sigma_u J_u^T.
Eigen::Matrix3d popup_point_covariance(const Eigen::Vector2d& u, const Intrinsics& k, const Plane& plane,
                                       const Eigen::Matrix2d& sigma_u);

// Optical-axis depth variance of the pop-up point. Throws what the
// backprojection throws.
double popup_depth_variance(const Eigen::Vector2d& u, const Intrinsics& k, const Plane& plane,
                            const Eigen::Matrix2d& sigma_u);

// Row-major single-channel float raster; NaN marks a missing pixel.
struct Raster {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Raster() = default;
  Raster(int w, int h, float fill = std::numeric_limits<float>::quiet_NaN());

  float& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  bool same_shape(const Raster& o) const { return width == o.width && height == o.height; }
};

struct FusedMap {
  Raster depth;
  Raster variance;
};

// Pixel-level dispatch: pop-up value when the external estimate is missing
// or too uncertain, else fuse(). Throws DimensionMismatch.
FusedMap fuse_depth_map(const Raster& external_depth, const Raster& external_var, const Raster& popup_depth,
                        const Raster& popup_var, double var_max = kDefaultMaxVariance);

// Scalar rule used per pixel by fuse_depth_map.
DepthHypothesis fuse_pixel(float ext_d, float ext_var, float pop_d, float pop_var, double var_max);

}  // namespace popup
