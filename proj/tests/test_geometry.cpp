#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "maskvo/geometry.hpp"
#include "test_util.hpp"

using namespace maskvo;
using namespace maskvo::geometry;

namespace {

// Closed-form solution of qdot = 0.5 * Omega(w) * q for constant w:
// Omega(w)^2 = -|w|^2 I, so exp(0.5 Omega t) = cos(|w|t/2) I + sin(|w|t/2) Omega/|w|.
Eigen::Vector4d integrate_omega_exact(const Mat4& omega, const Vec3& w, double t,
                                      const Eigen::Vector4d& q0) {
  const double n = w.norm();
  if (n < 1e-15) return q0;
  const double half = 0.5 * n * t;
  return (std::cos(half) * Mat4::Identity() + (std::sin(half) / n) * omega) * q0;
}

}  // namespace

TEST_CASE("quaternion constructor normalizes and canonicalizes sign") {
  Quaternion q(2.0, 0.0, 0.0, 0.0);
  CHECK(q.w() == doctest::Approx(1.0));
  Quaternion neg(-0.5, 0.5, 0.5, -0.5);
  CHECK(neg.w() > 0.0);
  Quaternion pos(0.5, -0.5, -0.5, 0.5);
  CHECK(neg.approx_equal(pos, 1e-15));
  CHECK_THROWS_AS(Quaternion(0.0, 0.0, 0.0, 0.0), InvalidArgument);
  CHECK_THROWS_AS(Quaternion(std::nan(""), 0.0, 0.0, 1.0), InvalidArgument);
}

TEST_CASE("quat_to_rotmat identity and 90deg-about-z fixtures") {
  CHECK((quat_to_rotmat(Quaternion()).matrix() - Mat3::Identity()).norm() < 1e-12);

  const double h = M_PI / 4.0;  // half-angle of 90 degrees
  Quaternion q(std::cos(h), 0.0, 0.0, std::sin(h));
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((quat_to_rotmat(q).matrix() - expected).norm() < 1e-12);
}

TEST_CASE("quat_to_rotmat yields orthonormal det-1 matrices on random input") {
  Rng rng(42);
  for (int i = 0; i < 1000; ++i) {
    const Mat3 r = quat_to_rotmat(testutil::random_quaternion(rng)).matrix();
    CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-9);
    CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("rotmat_to_quat fixtures") {
  CHECK(rotmat_to_quat(RotationMatrix()).approx_equal(Quaternion(), 1e-12));

  // 180 degrees about x: trace-negative Shepperd branch.
  Mat3 r;
  r << 1, 0, 0, 0, -1, 0, 0, 0, -1;
  CHECK(rotmat_to_quat(RotationMatrix(r)).approx_equal(Quaternion(0, 1, 0, 0), 1e-12));
}

TEST_CASE("rotmat_to_quat rejects non-orthonormal input") {
  Mat3 m = Mat3::Identity();
  m(0, 0) = 1.1;
  CHECK_THROWS_AS(RotationMatrix{m}, InvalidArgument);
}

TEST_CASE("quat<->rotmat round-trips on 1000 random rotations") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const Quaternion q = testutil::random_quaternion(rng);
    const RotationMatrix r = quat_to_rotmat(q);
    const Quaternion back = rotmat_to_quat(r);
    CHECK(q.approx_equal(back, 1e-9));
    CHECK((quat_to_rotmat(back).matrix() - r.matrix()).norm() < 1e-9);
  }
}

TEST_CASE("skew fixtures and cross-product identity") {
  Mat3 expected;
  expected << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  CHECK((skew(Vec3(1, 0, 0)) - expected).norm() < 1e-15);
  CHECK(skew(Vec3::Zero()).norm() == 0.0);

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const Vec3 v(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    const Vec3 u(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    CHECK((skew(v) * u - v.cross(u)).norm() < 1e-12);
    CHECK((skew(v) * v).norm() < 1e-12);
    CHECK((skew(v) + skew(v).transpose()).norm() == 0.0);
  }
}

TEST_CASE("omega_matrix zero rate gives zero matrix") {
  CHECK(omega_matrix(Vec3::Zero()).norm() == 0.0);
}

TEST_CASE("omega_matrix reproduces quaternion kinematics for constant rate") {
  const Vec3 w(0, 0, M_PI);
  const Eigen::Vector4d q0(1, 0, 0, 0);
  const Eigen::Vector4d q1 = integrate_omega_exact(omega_matrix(w), w, 1.0, q0);
  // 180 degrees about z.
  const Quaternion expected = Quaternion::from_axis_angle(Vec3(0, 0, 1), M_PI);
  Quaternion got(q1(0), q1(1), q1(2), q1(3));
  CHECK(got.approx_equal(expected, 1e-12));

  // Cross-check against the quaternion product path on random rates.
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const Vec3 rate(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    const Quaternion q = testutil::random_quaternion(rng);
    Eigen::Vector4d qv(q.w(), q.x(), q.y(), q.z());
    const Eigen::Vector4d qe = integrate_omega_exact(omega_matrix(rate), rate, 0.37, qv);
    const Quaternion viaexp = q * Quaternion::exp(rate * 0.37);
    CHECK(Quaternion(qe(0), qe(1), qe(2), qe(3)).approx_equal(viaexp, 1e-10));
  }
}

TEST_CASE("omega_matrix is antisymmetric") {
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const Vec3 w(rng.uniform(-9, 9), rng.uniform(-9, 9), rng.uniform(-9, 9));
    CHECK((omega_matrix(w).transpose() + omega_matrix(w)).norm() == 0.0);
  }
}

TEST_CASE("pose algebra fixtures") {
  Rng rng(13);
  const Pose p = testutil::random_pose(rng);
  const Pose id;

  const Pose c = pose_compose(id, p);
  CHECK(c.rotation.approx_equal(p.rotation, 1e-12));
  CHECK((c.translation - p.translation).norm() < 1e-12);

  const Pose rel = relative_pose(p, p);
  CHECK(rel.rotation.angle() < 1e-9);
  CHECK(rel.translation.norm() < 1e-9);

  const Pose pinv = pose_compose(p, pose_inverse(p));
  CHECK(pinv.rotation.angle() < 1e-9);
  CHECK(pinv.translation.norm() < 1e-9);
}

TEST_CASE("pose composition is associative") {
  Rng rng(17);
  for (int i = 0; i < 300; ++i) {
    const Pose a = testutil::random_pose(rng);
    const Pose b = testutil::random_pose(rng);
    const Pose c = testutil::random_pose(rng);
    const Pose lhs = pose_compose(pose_compose(a, b), c);
    const Pose rhs = pose_compose(a, pose_compose(b, c));
    CHECK(lhs.rotation.approx_equal(rhs.rotation, 1e-9));
    CHECK((lhs.translation - rhs.translation).norm() < 1e-9);
  }
}

TEST_CASE("pose apply matches rotation-then-translation") {
  Rng rng(19);
  for (int i = 0; i < 100; ++i) {
    const Pose a = testutil::random_pose(rng);
    const Vec3 x(rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4));
    CHECK((a.apply(x) - (quat_to_rotmat(a.rotation).matrix() * x + a.translation)).norm() <
          1e-12);
  }
}

TEST_CASE("so3 log/exp fixtures") {
  CHECK(so3_log(RotationMatrix()).norm() == 0.0);

  const RotationMatrix r = so3_exp(Vec3(0, 0, M_PI / 2));
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  CHECK((r.matrix() - expected).norm() < 1e-12);
}

TEST_CASE("so3 log throws near pi") {
  const Vec3 v = Vec3(1, 2, 3).normalized() * (M_PI - 1e-8);
  CHECK_THROWS_AS(so3_log(so3_exp(v)), DegenerateRotation);
}

TEST_CASE("so3 round-trips on 1000 random rotations below 3 rad") {
  Rng rng(23);
  for (int i = 0; i < 1000; ++i) {
    const Vec3 v = testutil::random_unit_vector(rng) * rng.uniform(0.0, 3.0);
    const RotationMatrix r = so3_exp(v);
    const Vec3 back = so3_log(r);
    CHECK((back - v).norm() < 1e-8);
    CHECK(std::abs(back.norm() - v.norm()) < 1e-8);
    CHECK((so3_exp(back).matrix() - r.matrix()).norm() < 1e-8);
  }
}

TEST_CASE("so3 log handles the near-pi eigen branch") {
  Rng rng(29);
  for (int i = 0; i < 200; ++i) {
    const double angle = rng.uniform(3.0, M_PI - 1e-5);
    const Vec3 v = testutil::random_unit_vector(rng) * angle;
    const Vec3 back = so3_log(so3_exp(v));
    CHECK((back - v).norm() < 1e-6);
    CHECK((so3_exp(back).matrix() - so3_exp(v).matrix()).norm() < 1e-8);
  }
}

TEST_CASE("quat-matrix-log chain closes") {
  Rng rng(31);
  for (int i = 0; i < 500; ++i) {
    const Quaternion q = testutil::random_quaternion(rng, 3.0);
    const Vec3 v = so3_log(quat_to_rotmat(q));
    CHECK(Quaternion::exp(v).approx_equal(q, 1e-8));
  }
}

TEST_CASE("camera intrinsics validation") {
  CameraIntrinsics k{60.0, 60.0, 32.0, 32.0, 64, 64};
  CHECK_NOTHROW(k.validate());
  k.cx = 70.0;
  CHECK_THROWS_AS(k.validate(), InvalidArgument);
  k = CameraIntrinsics{0.0, 60.0, 32.0, 32.0, 64, 64};
  CHECK_THROWS_AS(k.validate(), InvalidArgument);
}
