#pragma once

#include <Eigen/Core>

#include "maskvo/error.hpp"

namespace maskvo::geometry {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Unit quaternion, scalar-first (w, x, y, z), representing an active
/// rotation in a right-handed frame. Every constructor normalizes and
/// forces the canonical sign w >= 0, so q and -q store identical values.
class Quaternion {
 public:
  Quaternion() : w_(1.0), x_(0.0), y_(0.0), z_(0.0) {}
  Quaternion(double w, double x, double y, double z);

  static Quaternion identity() { return Quaternion(); }
  static Quaternion from_axis_angle(const Vec3& axis, double angle_rad);
  /// exp(v/2) in quaternion form: rotation by ||v|| about v.
  static Quaternion exp(const Vec3& rotation_vector);

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }
  Vec3 vec() const { return Vec3(x_, y_, z_); }

  Quaternion conjugate() const;
  /// Hamilton product, renormalized.
  Quaternion operator*(const Quaternion& rhs) const;
  Vec3 rotate(const Vec3& v) const;
  /// Geodesic rotation angle between this and other, in [0, pi].
  double angle_to(const Quaternion& other) const;
  /// Rotation angle of this quaternion, in [0, pi].
  double angle() const;

  bool approx_equal(const Quaternion& other, double tol) const;

 private:
  double w_, x_, y_, z_;
};

/// 3x3 orthonormal matrix with det +1. Construction from a raw matrix
/// validates orthonormality to 1e-6; products of valid rotations skip the
/// check.
class RotationMatrix {
 public:
  RotationMatrix() : m_(Mat3::Identity()) {}
  explicit RotationMatrix(const Mat3& m);

  /// Nearest rotation in the Frobenius sense (SVD projection).
  static RotationMatrix project(const Mat3& m);
  static RotationMatrix identity() { return RotationMatrix(); }

  const Mat3& matrix() const { return m_; }
  Vec3 operator*(const Vec3& v) const { return m_ * v; }
  RotationMatrix operator*(const RotationMatrix& rhs) const;
  RotationMatrix transpose() const;

 private:
  struct Unchecked {};
  RotationMatrix(const Mat3& m, Unchecked) : m_(m) {}
  Mat3 m_;
};

/// SE(3) rigid transform: x_out = R(q) * x_in + t.
struct Pose {
  Quaternion rotation;
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Quaternion& q, const Vec3& t);

  static Pose identity() { return Pose(); }
  Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }
};

/// Pinhole camera parameters, pixels.
struct CameraIntrinsics {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  void validate() const;
};

RotationMatrix quat_to_rotmat(const Quaternion& q);
Quaternion rotmat_to_quat(const RotationMatrix& R);

/// skew(v) * u == v x u; antisymmetric.
Mat3 skew(const Vec3& v);

/// Omega(w) such that qdot = 0.5 * Omega(w) * q for scalar-first quaternions
/// driven by body-frame angular rate w. Antisymmetric.
Mat4 omega_matrix(const Vec3& w);

Pose pose_compose(const Pose& a, const Pose& b);
Pose pose_inverse(const Pose& a);
/// inverse(a) * b: b expressed in a's frame.
Pose relative_pose(const Pose& a, const Pose& b);

/// Rotation vector (axis * angle). Throws DegenerateRotation within 1e-6 of pi.
Vec3 so3_log(const RotationMatrix& R);
RotationMatrix so3_exp(const Vec3& v);

/// Rotation vector of q; inverse of Quaternion::exp away from the pi singularity.
Vec3 quat_log(const Quaternion& q);

}  // namespace maskvo::geometry
