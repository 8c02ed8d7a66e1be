#include "maskvo/geometry.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace maskvo::geometry {

namespace {

constexpr double kSmallAngle = 1e-8;
constexpr double kPiGuard = 1e-6;

bool finite(const Vec3& v) { return v.allFinite(); }

}  // namespace

Quaternion::Quaternion(double w, double x, double y, double z) : w_(w), x_(x), y_(y), z_(z) {
  if (!std::isfinite(w) || !std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
    throw InvalidArgument("quaternion components must be finite");
  }
  const double n = std::sqrt(w_ * w_ + x_ * x_ + y_ * y_ + z_ * z_);
  if (n < 1e-12) {
    throw InvalidArgument("quaternion norm too small to normalize");
  }
  double s = 1.0 / n;
  if (w_ * s < 0.0) s = -s;  // canonical sign: w >= 0
  w_ *= s;
  x_ *= s;
  y_ *= s;
  z_ *= s;
}

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double angle_rad) {
  if (!finite(axis) || !std::isfinite(angle_rad)) {
    throw InvalidArgument("axis-angle input must be finite");
  }
  const double n = axis.norm();
  if (n < 1e-15) {
    if (std::abs(angle_rad) > 1e-12) {
      throw InvalidArgument("zero axis with nonzero angle");
    }
    return Quaternion();
  }
  const double half = 0.5 * angle_rad;
  const Vec3 u = axis / n;
  return Quaternion(std::cos(half), u.x() * std::sin(half), u.y() * std::sin(half),
                    u.z() * std::sin(half));
}

Quaternion Quaternion::exp(const Vec3& v) {
  if (!finite(v)) throw InvalidArgument("rotation vector must be finite");
  const double angle = v.norm();
  if (angle < kSmallAngle) {
    // Second-order series; normalization in the constructor absorbs the rest.
    return Quaternion(1.0 - angle * angle / 8.0, 0.5 * v.x(), 0.5 * v.y(), 0.5 * v.z());
  }
  return from_axis_angle(v / angle, angle);
}

Quaternion Quaternion::conjugate() const {
  Quaternion q;
  q.w_ = w_;
  q.x_ = -x_;
  q.y_ = -y_;
  q.z_ = -z_;
  if (q.w_ < 0.0) {
    q.w_ = -q.w_;
    q.x_ = -q.x_;
    q.y_ = -q.y_;
    q.z_ = -q.z_;
  }
  return q;
}

Quaternion Quaternion::operator*(const Quaternion& r) const {
  return Quaternion(w_ * r.w_ - x_ * r.x_ - y_ * r.y_ - z_ * r.z_,
                    w_ * r.x_ + x_ * r.w_ + y_ * r.z_ - z_ * r.y_,
                    w_ * r.y_ - x_ * r.z_ + y_ * r.w_ + z_ * r.x_,
                    w_ * r.z_ + x_ * r.y_ - y_ * r.x_ + z_ * r.w_);
}

Vec3 Quaternion::rotate(const Vec3& v) const {
  // v' = v + 2w(u x v) + 2 u x (u x v), u = vector part
  const Vec3 u(x_, y_, z_);
  const Vec3 uv = u.cross(v);
  return v + 2.0 * (w_ * uv + u.cross(uv));
}

double Quaternion::angle_to(const Quaternion& other) const {
  const double dot =
      std::abs(w_ * other.w_ + x_ * other.x_ + y_ * other.y_ + z_ * other.z_);
  return 2.0 * std::acos(std::min(1.0, dot));
}

double Quaternion::angle() const { return 2.0 * std::acos(std::min(1.0, std::abs(w_))); }

bool Quaternion::approx_equal(const Quaternion& other, double tol) const {
  return std::abs(w_ - other.w_) <= tol && std::abs(x_ - other.x_) <= tol &&
         std::abs(y_ - other.y_) <= tol && std::abs(z_ - other.z_) <= tol;
}

RotationMatrix::RotationMatrix(const Mat3& m) : m_(m) {
  if (!m.allFinite()) throw InvalidArgument("rotation matrix must be finite");
  const double ortho = (m.transpose() * m - Mat3::Identity()).norm();
  const double det = m.determinant();
  if (ortho > 1e-6 || std::abs(det - 1.0) > 1e-6) {
    throw InvalidArgument("matrix is not a rotation (orthonormality residual " +
                          std::to_string(ortho) + ", det " + std::to_string(det) + ")");
  }
}

RotationMatrix RotationMatrix::project(const Mat3& m) {
  if (!m.allFinite()) throw InvalidArgument("matrix must be finite");
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return RotationMatrix(r, Unchecked{});
}

RotationMatrix RotationMatrix::operator*(const RotationMatrix& rhs) const {
  return RotationMatrix(m_ * rhs.m_, Unchecked{});
}

RotationMatrix RotationMatrix::transpose() const {
  return RotationMatrix(m_.transpose(), Unchecked{});
}

Pose::Pose(const Quaternion& q, const Vec3& t) : rotation(q), translation(t) {
  if (!finite(t)) throw InvalidArgument("pose translation must be finite");
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw InvalidArgument("focal lengths must be positive");
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw InvalidArgument("principal point must lie inside the image");
  }
}

RotationMatrix quat_to_rotmat(const Quaternion& q) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  Mat3 m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return RotationMatrix(m);
}

Quaternion rotmat_to_quat(const RotationMatrix& R) {
  // Shepperd: branch on the largest of trace and diagonal entries.
  const Mat3& m = R.matrix();
  const double tr = m.trace();
  double w, x, y, z;
  if (tr > 0.0) {
    const double s = std::sqrt(tr + 1.0) * 2.0;
    w = 0.25 * s;
    x = (m(2, 1) - m(1, 2)) / s;
    y = (m(0, 2) - m(2, 0)) / s;
    z = (m(1, 0) - m(0, 1)) / s;
  } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
    const double s = std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2)) * 2.0;
    w = (m(2, 1) - m(1, 2)) / s;
    x = 0.25 * s;
    y = (m(0, 1) + m(1, 0)) / s;
    z = (m(0, 2) + m(2, 0)) / s;
  } else if (m(1, 1) > m(2, 2)) {
    const double s = std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2)) * 2.0;
    w = (m(0, 2) - m(2, 0)) / s;
    x = (m(0, 1) + m(1, 0)) / s;
    y = 0.25 * s;
    z = (m(1, 2) + m(2, 1)) / s;
  } else {
    const double s = std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1)) * 2.0;
    w = (m(1, 0) - m(0, 1)) / s;
    x = (m(0, 2) + m(2, 0)) / s;
    y = (m(1, 2) + m(2, 1)) / s;
    z = 0.25 * s;
  }
  return Quaternion(w, x, y, z);
}

Mat3 skew(const Vec3& v) {
  if (!finite(v)) throw InvalidArgument("skew input must be finite");
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

Mat4 omega_matrix(const Vec3& w) {
  if (!finite(w)) throw InvalidArgument("angular rate must be finite");
  Mat4 m;
  m << 0.0, -w.x(), -w.y(), -w.z(),
      w.x(), 0.0, w.z(), -w.y(),
      w.y(), -w.z(), 0.0, w.x(),
      w.z(), w.y(), -w.x(), 0.0;
  return m;
}

Pose pose_compose(const Pose& a, const Pose& b) {
  return Pose(a.rotation * b.rotation, a.rotation.rotate(b.translation) + a.translation);
}

Pose pose_inverse(const Pose& a) {
  const Quaternion qi = a.rotation.conjugate();
  return Pose(qi, -qi.rotate(a.translation));
}

Pose relative_pose(const Pose& a, const Pose& b) { return pose_compose(pose_inverse(a), b); }

Vec3 so3_log(const RotationMatrix& R) {
  const Mat3& m = R.matrix();
  const Vec3 s(0.5 * (m(2, 1) - m(1, 2)), 0.5 * (m(0, 2) - m(2, 0)),
               0.5 * (m(1, 0) - m(0, 1)));  // sin(theta) * axis
  const double cos_theta = 0.5 * (m.trace() - 1.0);
  const double theta = std::atan2(s.norm(), cos_theta);

  if (theta >= M_PI - kPiGuard) {
    throw DegenerateRotation("rotation angle within 1e-6 of pi, axis ambiguous");
  }
  if (theta < kSmallAngle) {
    return s * (1.0 + theta * theta / 6.0);
  }
  if (theta > 3.0) {
    // Close to pi the symmetric part determines the axis far more stably
    // than s/sin(theta). B = cos(theta) I + (1-cos(theta)) a a^T.
    const Mat3 b = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Mat3> eig(b);
    Vec3 axis = eig.eigenvectors().col(2);  // eigenvalue 1
    if (s.dot(axis) < 0.0) axis = -axis;
    return axis * theta;
  }
  return s * (theta / std::sin(theta));
}

Vec3 quat_log(const Quaternion& q) {
  const Vec3 v = q.vec();
  const double vn = v.norm();
  const double angle = 2.0 * std::atan2(vn, q.w());  // w >= 0, so angle in [0, pi]
  if (vn < 1e-12) {
    return 2.0 * v;  // series: 2v/w with w ~ 1
  }
  return v * (angle / vn);
}

RotationMatrix so3_exp(const Vec3& v) {
  if (!finite(v)) throw InvalidArgument("rotation vector must be finite");
  const double theta = v.norm();
  const Mat3 k = skew(v);
  Mat3 m;
  if (theta < kSmallAngle) {
    m = Mat3::Identity() + k + 0.5 * (k * k);
  } else {
    const double s = std::sin(theta) / theta;
    const double c = (1.0 - std::cos(theta)) / (theta * theta);
    m = Mat3::Identity() + s * k + c * (k * k);
  }
  return RotationMatrix(m);
}

}  // namespace maskvo::geometry
