#pragma once

// Projective and Euclidean geometry for pop-up plane models: homogeneous
// planes, rigid poses, pinhole backprojection and wall construction.
//
// Frames: a Pose maps local camera coordinates into the world,
// p_w = R p_c + t. The camera looks along local +z with +y pointing down the
// image. The world ground plane is z = 0 with normal +z.

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>

#include "popup/error.h"
#include "popup/lie.h"

namespace popup {

inline constexpr double kParallelEpsilon = 1e-8;
inline constexpr double kPointEpsilon = 1e-6;
inline constexpr double kSignEpsilon = 1e-12;

enum class PlaneLabel { Ground, Wall };

// Plane {p : n.p + d = 0} with |n| = 1. The sign is canonicalized so that the
// first coefficient of (n, d) whose magnitude exceeds kSignEpsilon is positive.
template <typename T>
class HomogeneousPlane {
 public:
  HomogeneousPlane() : n_(T(0), T(0), T(1)), d_(T(0)) {}

  HomogeneousPlane(const Vector3<T>& n, const T& d) {
    const T len = n.norm();
    n_ = n / len;
    d_ = d / len;
    canonicalize();
  }

  explicit HomogeneousPlane(const Vector4<T>& coeffs)
      : HomogeneousPlane(Vector3<T>(coeffs.template head<3>()), coeffs(3)) {}

  const Vector3<T>& normal() const { return n_; }
  const T& offset() const { return d_; }
  Vector4<T> coeffs() const {
    Vector4<T> c;
    c << n_, d_;
    return c;
  }

  // Signed distance of p; positive on the side the normal points to.
  T signed_distance(const Vector3<T>& p) const { return n_.dot(p) + d_; }

  template <typename U>
  HomogeneousPlane<U> cast() const {
    return HomogeneousPlane<U>(n_.template cast<U>(), U(d_));
  }

 private:
  void canonicalize() {
    for (int i = 0; i < 4; ++i) {
      const double c = value_of(i < 3 ? n_(i) : d_);
      if (std::abs(c) > kSignEpsilon) {
        if (c < 0.0) {
          n_ = -n_;
          d_ = -d_;
        }
        return;
      }
    }
  }

  Vector3<T> n_;
  T d_;
};

template <typename T>
struct Pose {
  Matrix3<T> R = Matrix3<T>::Identity();
  Vector3<T> t = Vector3<T>::Zero();

  Pose() = default;
  Pose(const Matrix3<T>& rotation, const Vector3<T>& translation) : R(rotation), t(translation) {}

  static Pose Identity() { return Pose(); }

  Pose inverse() const { return Pose(R.transpose(), -(R.transpose() * t)); }

  Pose operator*(const Pose& other) const { return Pose(R * other.R, R * other.t + t); }

  Vector3<T> operator*(const Vector3<T>& p) const { return R * p + t; }

  template <typename U>
  Pose<U> cast() const {
    return Pose<U>(R.template cast<U>(), t.template cast<U>());
  }
};

using Plane = HomogeneousPlane<double>;
using Pose3 = Pose<double>;

inline bool is_valid_rotation(const Eigen::Matrix3d& r, double tol = 1e-9) {
  return (r.transpose() * r - Eigen::Matrix3d::Identity()).norm() < tol && r.determinant() > 0.0;
}

inline Eigen::Vector4d rotation_to_quaternion(const Eigen::Matrix3d& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  return q.coeffs();  // (x, y, z, w)
}

inline Eigen::Matrix3d quaternion_to_rotation(const Eigen::Vector4d& xyzw) {
  Eigen::Quaterniond q(xyzw(3), xyzw(0), xyzw(1), xyzw(2));
  return q.normalized().toRotationMatrix();
}

template <typename T>
struct CameraIntrinsics {
  T fx, fy, cx, cy;

  CameraIntrinsics(T fx_, T fy_, T cx_, T cy_) : fx(fx_), fy(fy_), cx(cx_), cy(cy_) {
    if (!(value_of(fx) > 0.0 && value_of(fy) > 0.0)) {
      throw Error(ErrorCode::PreconditionViolation, "focal lengths must be positive");
    }
  }

  Matrix3<T> matrix() const {
    Matrix3<T> k;
    k << fx, T(0), cx, T(0), fy, cy, T(0), T(0), T(1);
    return k;
  }

  // K^-1 u for a homogeneous pixel u.
  Vector3<T> unproject(const Vector3<T>& u) const {
    return Vector3<T>((u.x() - cx * u.z()) / fx, (u.y() - cy * u.z()) / fy, u.z());
  }

  Eigen::Matrix<T, 2, 1> project(const Vector3<T>& p) const {
    return Eigen::Matrix<T, 2, 1>(fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy);
  }
};

using Intrinsics = CameraIntrinsics<double>;

inline Eigen::Vector3d pixel_ray(double u, double v) { return Eigen::Vector3d(u, v, 1.0); }

// Plane expressed in frame A, moved into frame B by T (p_B = T p_A).
// Equivalent to T^-T (n, d).
template <typename T>
HomogeneousPlane<T> transform_plane(const HomogeneousPlane<T>& plane, const Pose<T>& a_to_b) {
  const Vector3<T> n = a_to_b.R * plane.normal();
  return HomogeneousPlane<T>(n, plane.offset() - n.dot(a_to_b.t));
}

// Intersection of the ray K^-1 u with a camera-frame plane.
template <typename T>
Vector3<T> backproject_to_plane(const Vector3<T>& u, const CameraIntrinsics<T>& k,
                                const HomogeneousPlane<T>& plane) {
  const Vector3<T> ray = k.unproject(u);
  const T denom = plane.normal().dot(ray);
  if (std::abs(value_of(denom)) < kParallelEpsilon) {
    throw Error(ErrorCode::RayParallelToPlane, "ray does not intersect plane");
  }
  const Vector3<T> p = ray * (-plane.offset() / denom);
  if (!(value_of(p.z()) > 0.0)) {
    throw Error(ErrorCode::BehindCamera, "intersection behind the camera");
  }
  return p;
}

// Vertical wall through two ground points: n = n_gnd x (p1 - p0).
template <typename T>
HomogeneousPlane<T> wall_from_ground_points(const Vector3<T>& p0, const Vector3<T>& p1,
                                            const HomogeneousPlane<T>& ground) {
  const Vector3<T> edge = p1 - p0;
  if (value_of(edge.norm()) < kPointEpsilon) {
    throw Error(ErrorCode::DegenerateEdge, "edge endpoints coincide");
  }
  const Vector3<T> n = ground.normal().cross(edge);
  if (value_of(n.norm()) < kPointEpsilon * value_of(edge.norm())) {
    throw Error(ErrorCode::DegenerateEdge, "edge parallel to the ground normal");
  }
  const Vector3<T> unit = n / n.norm();
  return HomogeneousPlane<T>(unit, -unit.dot(p0));
}

template <typename T>
HomogeneousPlane<T> wall_from_ground_edge(const Vector3<T>& u0, const Vector3<T>& u1,
                                          const CameraIntrinsics<T>& k,
                                          const HomogeneousPlane<T>& ground_c) {
  return wall_from_ground_points(backproject_to_plane(u0, k, ground_c),
                                 backproject_to_plane(u1, k, ground_c), ground_c);
}

// Camera-to-world rotation from the vanishing points of the world x, y, z
// axes (v_i ~ K R^T e_i). The homogeneous sign of each v_i is honoured; the
// first column is then flipped if needed so the camera forward axis has a
// nonnegative world-x component, and the second column if det < 0.
Eigen::Matrix3d rotation_from_vanishing_points(const Eigen::Vector3d& v1, const Eigen::Vector3d& v2,
                                               const Eigen::Vector3d& v3, const Intrinsics& k);

}  // namespace popup
