#pragma once

// Exponential/logarithm maps used by the optimizer charts. Everything here is
// templated on the scalar so that the same code path is differentiated by
// Eigen's forward-mode AutoDiffScalar when factors are linearized.

#include <Eigen/Core>
#include <cmath>
#include <type_traits>

namespace popup {

template <typename T>
using Vector3 = Eigen::Matrix<T, 3, 1>;
template <typename T>
using Vector4 = Eigen::Matrix<T, 4, 1>;
template <typename T>
using Matrix3 = Eigen::Matrix<T, 3, 3>;

// Plain value of a (possibly dual) scalar, used for branch decisions only.
template <typename T>
double value_of(const T& x) {
  if constexpr (std::is_arithmetic_v<T>) {
    return static_cast<double>(x);
  } else {
    return value_of(x.value());
  }
}

template <typename T>
Matrix3<T> skew(const Vector3<T>& w) {
  Matrix3<T> m;
  m << T(0), -w.z(), w.y(),
       w.z(), T(0), -w.x(),
       -w.y(), w.x(), T(0);
  return m;
}

template <typename T>
Vector3<T> vee(const Matrix3<T>& m) {
  return Vector3<T>(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)) * T(0.5);
}

// SO(3) exponential (Rodrigues).
template <typename T>
Matrix3<T> so3_exp(const Vector3<T>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T theta2 = w.squaredNorm();
  const Matrix3<T> k = skew(w);
  if (value_of(theta2) < 1e-16) {
    return Matrix3<T>::Identity() + k + T(0.5) * k * k;
  }
  const T theta = sqrt(theta2);
  return Matrix3<T>::Identity() + (sin(theta) / theta) * k +
         ((T(1) - cos(theta)) / theta2) * k * k;
}

// SO(3) logarithm, valid on the whole group including rotations near pi.
template <typename T>
Vector3<T> so3_log(const Matrix3<T>& r) {
  using std::atan2;
  using std::sqrt;
  const Vector3<T> axis_sin = vee(r);  // sin(theta) * axis
  const T c = (r.trace() - T(1)) * T(0.5);
  const T s = axis_sin.norm();
  if (value_of(s) < 1e-10 && value_of(c) > 0.0) {
    return axis_sin;
  }
  if (value_of(c) > -0.9) {
    const T theta = atan2(s, c);
    return axis_sin * (theta / s);
  }
  // Near pi: recover the axis from the symmetric part, sign from vee().
  const T theta = atan2(s, c);
  const Matrix3<T> b = (r + r.transpose()) * T(0.5) - c * Matrix3<T>::Identity();
  const T denom = T(1) - c;
  int k = 0;
  for (int i = 1; i < 3; ++i) {
    if (value_of(b(i, i)) > value_of(b(k, k))) k = i;
  }
  Vector3<T> axis = b.col(k) / sqrt(b(k, k) * denom);
  axis /= axis.norm();
  if (value_of(axis.dot(axis_sin)) < 0.0) axis = -axis;
  return axis * theta;
}

// Unit quaternions are stored as (x, y, z, w): vector part first, scalar last.
template <typename T>
Vector4<T> quat_mul(const Vector4<T>& a, const Vector4<T>& b) {
  const Vector3<T> av = a.template head<3>();
  const Vector3<T> bv = b.template head<3>();
  Vector4<T> out;
  out.template head<3>() = a(3) * bv + b(3) * av + av.cross(bv);
  out(3) = a(3) * b(3) - av.dot(bv);
  return out;
}

template <typename T>
Vector4<T> quat_conj(const Vector4<T>& q) {
  return Vector4<T>(-q(0), -q(1), -q(2), q(3));
}

// exp(delta) = (sin(|delta|/2) delta/|delta|, cos(|delta|/2)).
template <typename T>
Vector4<T> quat_exp(const Vector3<T>& delta) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const T theta2 = delta.squaredNorm();
  Vector4<T> q;
  if (value_of(theta2) < 1e-16) {
    q.template head<3>() = delta * T(0.5);
    q(3) = T(1) - theta2 / T(8);
    return q / q.norm();
  }
  const T theta = sqrt(theta2);
  q.template head<3>() = delta * (sin(theta * T(0.5)) / theta);
  q(3) = cos(theta * T(0.5));
  return q;
}

// Inverse of quat_exp on the double cover: q and -q give the same result.
template <typename T>
Vector3<T> quat_log(const Vector4<T>& q_in) {
  using std::atan2;
  const Vector4<T> q = value_of(q_in(3)) < 0.0 ? Vector4<T>(-q_in) : q_in;
  const Vector3<T> v = q.template head<3>();
  const T s = v.norm();
  if (value_of(s) < 1e-10) {
    return v * (T(2) / q(3));
  }
  const T theta = T(2) * atan2(s, q(3));
  return v * (theta / s);
}

}  // namespace popup
