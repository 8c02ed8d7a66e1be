#include "maskvo/sfm.hpp"

#include <doctest.h>

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "maskvo/error.hpp"
#include "maskvo/geometry.hpp"
#include "maskvo/rng.hpp"
#include "test_util.hpp"

using namespace maskvo;
using namespace maskvo::sfm;
using geometry::Mat3;
using geometry::Pose;
using geometry::Quaternion;
using geometry::Vec2;
using geometry::Vec3;

namespace {

CameraIntrinsics desk_camera() {
  CameraIntrinsics k;
  k.fx = 500.0;
  k.fy = 480.0;
  k.cx = 320.0;
  k.cy = 240.0;
  k.width = 640;
  k.height = 480;
  return k;
}

Mat3 unit_essential(const Pose& rel) {
  const Mat3 e = geometry::skew(rel.translation.normalized()) *
                 geometry::quat_to_rotmat(rel.rotation).matrix();
  return e;  // unit translation makes singular values (1, 1, 0) already
}

// Noise-free correspondences from 3D points seen by camera a at identity and
// camera b at the given relative pose (X_b = R X_a + t).
std::vector<Correspondence> synthetic_corrs(Rng& rng, int n, const Pose& rel) {
  std::vector<Correspondence> out;
  const Mat3 r = geometry::quat_to_rotmat(rel.rotation).matrix();
  while (static_cast<int>(out.size()) < n) {
    const Vec3 xa(rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(4.0, 10.0));
    const Vec3 xb = r * xa + rel.translation;
    if (xb.z() < 0.5) continue;
    Correspondence c;
    c.a = Vec2(xa.x() / xa.z(), xa.y() / xa.z());
    c.b = Vec2(xb.x() / xb.z(), xb.y() / xb.z());
    out.push_back(c);
  }
  return out;
}

// Outliers far from the epipolar geometry of the given model.
std::vector<Correspondence> wild_outliers(Rng& rng, int n, const Mat3& essential) {
  std::vector<Correspondence> out;
  while (static_cast<int>(out.size()) < n) {
    Correspondence c;
    c.a = Vec2(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
    c.b = Vec2(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
    if (sampson_distance(essential, c) > 5e-3) out.push_back(c);
  }
  return out;
}

Pose random_motion(Rng& rng) {
  const Quaternion q = testutil::random_quaternion(rng, 0.3);
  Vec3 t(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 0.5));
  if (t.norm() < 0.2) t = Vec3(0.5, -0.3, 0.1);
  return Pose(q, t);
}

double matrix_gap_up_to_sign(const Mat3& a, const Mat3& b) {
  const Mat3 an = a / a.norm();
  const Mat3 bn = b / b.norm();
  return std::min((an - bn).norm(), (an + bn).norm());
}

double max_epipolar_residual(const Mat3& essential, const std::vector<Correspondence>& corrs) {
  double worst = 0.0;
  for (const Correspondence& c : corrs) {
    const Vec3 pa(c.a.x(), c.a.y(), 1.0);
    const Vec3 pb(c.b.x(), c.b.y(), 1.0);
    worst = std::max(worst, std::abs(pb.dot(essential * pa)));
  }
  return worst;
}

}  // namespace

TEST_CASE("normalize_points maps principal point to origin") {
  const CameraIntrinsics k = desk_camera();
  std::vector<vision::Keypoint> kps = {{k.cx, k.cy, 0.0}, {k.cx + k.fx, k.cy, 0.0}};
  const std::vector<Vec2> n = normalize_points(kps, k);
  CHECK(n[0].x() == 0.0);
  CHECK(n[0].y() == 0.0);
  CHECK(n[1].x() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(n[1].y() == 0.0);
}

TEST_CASE("normalize then denormalize round-trips") {
  const CameraIntrinsics k = desk_camera();
  Rng rng(3);
  std::vector<vision::Keypoint> kps;
  for (int i = 0; i < 100; ++i) {
    kps.push_back({rng.uniform(0.0, 640.0), rng.uniform(0.0, 480.0), 0.0});
  }
  const std::vector<Vec2> back = denormalize_points(normalize_points(kps, k), k);
  for (std::size_t i = 0; i < kps.size(); ++i) {
    CHECK(std::abs(back[i].x() - kps[i].x) < 1e-12);
    CHECK(std::abs(back[i].y() - kps[i].y) < 1e-12);
  }
}

TEST_CASE("eight_point recovers the sideways-translation essential matrix") {
  Rng rng(7);
  const Pose rel(Quaternion::identity(), Vec3(1, 0, 0));
  const std::vector<Correspondence> corrs = synthetic_corrs(rng, 30, rel);
  const EssentialMatrix e = eight_point(corrs);

  Mat3 expected = Mat3::Zero();
  expected(1, 2) = -1.0;
  expected(2, 1) = 1.0;
  CHECK(matrix_gap_up_to_sign(e.matrix(), expected) < 1e-8);
  CHECK(max_epipolar_residual(e.matrix(), corrs) < 1e-10);
}

TEST_CASE("eight_point is exact on noise-free general motion") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Pose rel = random_motion(rng);
    const std::vector<Correspondence> corrs = synthetic_corrs(rng, 20, rel);
    const EssentialMatrix e = eight_point(corrs);
    CHECK(max_epipolar_residual(e.matrix(), corrs) < 1e-8);
    CHECK(matrix_gap_up_to_sign(e.matrix(), unit_essential(rel)) < 1e-6);

    // The essential invariant: singular values (1, 1, 0), Frobenius sqrt(2).
    const Eigen::JacobiSVD<Mat3> svd(e.matrix());
    CHECK(std::abs(svd.singularValues()(0) - 1.0) < 1e-8);
    CHECK(std::abs(svd.singularValues()(1) - 1.0) < 1e-8);
    CHECK(std::abs(svd.singularValues()(2)) < 1e-8);
    CHECK(std::abs(e.matrix().norm() - std::sqrt(2.0)) < 1e-8);
  }
}

TEST_CASE("eight_point rejects degenerate input") {
  Correspondence dup;
  dup.a = Vec2(0.1, 0.2);
  dup.b = Vec2(0.15, 0.18);
  const std::vector<Correspondence> dups(10, dup);
  CHECK_THROWS_AS(eight_point(dups), DegenerateInput);

  Rng rng(13);
  const std::vector<Correspondence> few =
      synthetic_corrs(rng, 7, Pose(Quaternion::identity(), Vec3(1, 0, 0)));
  CHECK_THROWS_AS(eight_point(few), InsufficientData);

  // Two distinct points repeated is still rank-deficient.
  std::vector<Correspondence> two_dups;
  for (int i = 0; i < 5; ++i) {
    Correspondence c1, c2;
    c1.a = Vec2(0.1, 0.2);
    c1.b = Vec2(0.12, 0.21);
    c2.a = Vec2(-0.3, 0.1);
    c2.b = Vec2(-0.28, 0.09);
    two_dups.push_back(c1);
    two_dups.push_back(c2);
  }
  CHECK_THROWS_AS(eight_point(two_dups), DegenerateInput);
}

TEST_CASE("hartley normalization makes the linear stage scale invariant") {
  Rng rng(17);
  const Pose rel = random_motion(rng);
  const std::vector<Correspondence> corrs = synthetic_corrs(rng, 25, rel);

  const double s = 3.7;
  std::vector<Correspondence> scaled = corrs;
  for (Correspondence& c : scaled) {
    c.a *= s;
    c.b *= s;
  }

  const Mat3 f = fundamental_linear(corrs);
  const Mat3 f_scaled = fundamental_linear(scaled);

  // Scaling image coordinates by s conjugates the linear solution by
  // diag(1/s, 1/s, 1); Hartley normalization keeps both solves exact.
  const Mat3 s_inv = Vec3(1.0 / s, 1.0 / s, 1.0).asDiagonal();
  CHECK(matrix_gap_up_to_sign(f_scaled, s_inv * f * s_inv) < 1e-9);

  double worst = 0.0;
  for (const Correspondence& c : scaled) {
    const Vec3 pa(c.a.x(), c.a.y(), 1.0);
    const Vec3 pb(c.b.x(), c.b.y(), 1.0);
    worst = std::max(worst, std::abs(pb.dot(f_scaled * pa)) / f_scaled.norm());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("ransac_essential keeps every noise-free correspondence") {
  Rng rng(19);
  const Pose rel = random_motion(rng);
  const std::vector<Correspondence> corrs = synthetic_corrs(rng, 100, rel);
  RansacConfig config;
  config.rng_seed = 5;
  const auto [e, stats] = ransac_essential(corrs, config);
  CHECK(stats.inlier_count == 100);
  CHECK(stats.outlier_count == 0);
}

TEST_CASE("ransac_essential separates labeled inliers from outliers") {
  Rng rng(23);
  const Pose rel = random_motion(rng);
  std::vector<Correspondence> corrs = synthetic_corrs(rng, 80, rel);
  const std::vector<Correspondence> outliers = wild_outliers(rng, 20, unit_essential(rel));
  corrs.insert(corrs.end(), outliers.begin(), outliers.end());

  RansacConfig config;
  config.rng_seed = 9;
  const auto [e, stats] = ransac_essential(corrs, config);

  std::set<int> inliers(stats.inlier_indices.begin(), stats.inlier_indices.end());
  int true_recovered = 0;
  for (int i = 0; i < 80; ++i) true_recovered += inliers.count(i);
  CHECK(true_recovered >= 76);  // >= 95% of the true inliers
  for (int i = 80; i < 100; ++i) CHECK(inliers.count(i) == 0);

  // Reported inliers all satisfy the Sampson threshold under the reported
  // model, which the stats themselves must be consistent with.
  for (int i : stats.inlier_indices) {
    CHECK(sampson_distance(e.matrix(), corrs[i]) < config.inlier_threshold);
  }
  CHECK(stats.inlier_count + stats.outlier_count == 100);
}

TEST_CASE("ransac_essential is deterministic per seed") {
  Rng rng(29);
  const Pose rel = random_motion(rng);
  std::vector<Correspondence> corrs = synthetic_corrs(rng, 60, rel);
  const std::vector<Correspondence> outliers = wild_outliers(rng, 15, unit_essential(rel));
  corrs.insert(corrs.end(), outliers.begin(), outliers.end());

  RansacConfig config;
  config.rng_seed = 77;
  const auto [e1, s1] = ransac_essential(corrs, config);
  const auto [e2, s2] = ransac_essential(corrs, config);
  CHECK(s1.inlier_indices == s2.inlier_indices);
  CHECK((e1.matrix() - e2.matrix()).norm() == 0.0);
}

TEST_CASE("ransac_essential grows its consensus when exact inliers are added") {
  Rng rng(31);
  const Pose rel = random_motion(rng);
  std::vector<Correspondence> base = synthetic_corrs(rng, 60, rel);
  const std::vector<Correspondence> outliers = wild_outliers(rng, 15, unit_essential(rel));
  base.insert(base.end(), outliers.begin(), outliers.end());

  RansacConfig config;
  config.rng_seed = 101;
  const auto [e1, s1] = ransac_essential(base, config);

  std::vector<Correspondence> extended = base;
  const std::vector<Correspondence> extra = synthetic_corrs(rng, 25, rel);
  extended.insert(extended.end(), extra.begin(), extra.end());
  const auto [e2, s2] = ransac_essential(extended, config);
  CHECK(s2.inlier_count >= s1.inlier_count);
}

TEST_CASE("ransac_essential throws when no model reaches quorum") {
  // Unstructured correspondences: any 8-point fit projected onto the
  // essential manifold leaves its own sample with large residuals.
  Rng rng(73);
  std::vector<Correspondence> noise;
  for (int i = 0; i < 24; ++i) {
    Correspondence c;
    c.a = Vec2(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
    c.b = Vec2(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
    noise.push_back(c);
  }
  RansacConfig config;
  config.rng_seed = 1;
  config.inlier_threshold = 1e-6;
  config.max_iterations = 50;
  CHECK_THROWS_AS(ransac_essential(noise, config), NoConsensus);
}

TEST_CASE("ransac_essential error paths") {
  Rng rng(37);
  const std::vector<Correspondence> few =
      synthetic_corrs(rng, 7, Pose(Quaternion::identity(), Vec3(1, 0, 0)));
  RansacConfig config;
  CHECK_THROWS_AS(ransac_essential(few, config), InsufficientData);

  config.confidence = 1.5;
  const std::vector<Correspondence> some =
      synthetic_corrs(rng, 20, Pose(Quaternion::identity(), Vec3(1, 0, 0)));
  CHECK_THROWS_AS(ransac_essential(some, config), InvalidArgument);
}

TEST_CASE("decompose_essential of a pure-translation matrix includes identity") {
  const Mat3 e = geometry::skew(Vec3(1, 0, 0));
  const auto candidates = decompose_essential(EssentialMatrix(e));
  bool plus = false, minus = false;
  for (const PoseCandidate& c : candidates) {
    const double rot_angle =
        geometry::rotmat_to_quat(c.rotation).angle_to(Quaternion::identity());
    if (rot_angle < 1e-6 && (c.translation - Vec3(1, 0, 0)).norm() < 1e-6) plus = true;
    if (rot_angle < 1e-6 && (c.translation + Vec3(1, 0, 0)).norm() < 1e-6) minus = true;
  }
  CHECK(plus);
  CHECK(minus);
}

TEST_CASE("decompose_essential recovers random ground truth") {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose rel = random_motion(rng);
    const Vec3 t_hat = rel.translation.normalized();
    const auto candidates = decompose_essential(EssentialMatrix(unit_essential(rel)));

    double best = 1e9;
    for (const PoseCandidate& c : candidates) {
      const double rot_gap = geometry::rotmat_to_quat(c.rotation).angle_to(rel.rotation);
      const double dir_gap = std::acos(std::clamp(c.translation.dot(t_hat), -1.0, 1.0));
      best = std::min(best, std::max(rot_gap, dir_gap));

      // Every candidate rotation is a proper rotation.
      const Mat3 r = c.rotation.matrix();
      CHECK((r.transpose() * r - Mat3::Identity()).norm() < 1e-9);
      CHECK(std::abs(r.determinant() - 1.0) < 1e-9);
      CHECK(std::abs(c.translation.norm() - 1.0) < 1e-12);
    }
    CHECK(best < 1e-6);
  }
}

TEST_CASE("select_pose_cheirality picks the true candidate on forward motion") {
  Rng rng(43);
  const Pose rel(testutil::random_quaternion(rng, 0.2), Vec3(0.15, -0.1, 0.6));
  const std::vector<Correspondence> corrs = synthetic_corrs(rng, 50, rel);
  const auto candidates = decompose_essential(EssentialMatrix(unit_essential(rel)));
  const CheiralityResult result = select_pose_cheirality(candidates, corrs);

  CHECK(result.positive_depth_count == 50);
  CHECK(geometry::rotmat_to_quat(result.rotation).angle_to(rel.rotation) < 1e-6);
  const Vec3 t_hat = rel.translation.normalized();
  CHECK((result.translation - t_hat).norm() < 1e-6);
}

TEST_CASE("select_pose_cheirality is invariant to correspondence order") {
  Rng rng(47);
  const Pose rel(testutil::random_quaternion(rng, 0.2), Vec3(0.3, 0.1, 0.5));
  std::vector<Correspondence> corrs = synthetic_corrs(rng, 40, rel);
  const auto candidates = decompose_essential(EssentialMatrix(unit_essential(rel)));
  const CheiralityResult before = select_pose_cheirality(candidates, corrs);

  // Fisher-Yates shuffle with the seeded generator.
  for (int i = static_cast<int>(corrs.size()) - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(i + 1)));
    std::swap(corrs[i], corrs[j]);
  }
  const CheiralityResult after = select_pose_cheirality(candidates, corrs);
  CHECK(before.positive_depth_count == after.positive_depth_count);
  CHECK((before.rotation.matrix() - after.rotation.matrix()).norm() == 0.0);
  CHECK((before.translation - after.translation).norm() == 0.0);
}

TEST_CASE("select_pose_cheirality reports a tie when nothing triangulates") {
  const Mat3 e = geometry::skew(Vec3(1, 0, 0));
  const auto candidates = decompose_essential(EssentialMatrix(e));
  Correspondence on_axis;
  on_axis.a = Vec2(0.0, 0.0);
  on_axis.b = Vec2(0.0, 0.0);
  CHECK_THROWS_AS(select_pose_cheirality(candidates, {on_axis}), AmbiguousPose);
  CHECK_THROWS_AS(select_pose_cheirality(candidates, {}), InsufficientData);
}

TEST_CASE("ransac_homography on identical point sets returns identity") {
  Rng rng(53);
  std::vector<Vec2> pts;
  for (int i = 0; i < 30; ++i) {
    pts.emplace_back(rng.uniform(0.0, 640.0), rng.uniform(0.0, 480.0));
  }
  RansacConfig config;
  config.inlier_threshold = 3.0;
  const auto [h, stats] = ransac_homography(pts, pts, config);
  CHECK((h - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(stats.inlier_count == 30);
}

TEST_CASE("ransac_homography recovers a pure pixel translation") {
  Rng rng(59);
  std::vector<Vec2> a, b;
  for (int i = 0; i < 25; ++i) {
    const Vec2 p(rng.uniform(50.0, 600.0), rng.uniform(50.0, 430.0));
    a.push_back(p);
    b.emplace_back(p.x() + 5.0, p.y() + 3.0);
  }
  RansacConfig config;
  config.inlier_threshold = 3.0;
  const auto [h, stats] = ransac_homography(a, b, config);
  Mat3 expected = Mat3::Identity();
  expected(0, 2) = 5.0;
  expected(1, 2) = 3.0;
  CHECK((h - expected).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(stats.inlier_count == 25);
}

TEST_CASE("ransac_homography rejects planted outliers under a projective warp") {
  Mat3 warp;
  warp << 1.05, 0.02, 4.0, -0.01, 0.98, -2.0, 1e-4, -5e-5, 1.0;

  Rng rng(61);
  std::vector<Vec2> a, b;
  for (int i = 0; i < 28; ++i) {
    const Vec2 p(rng.uniform(40.0, 600.0), rng.uniform(40.0, 440.0));
    const Vec3 q = warp * Vec3(p.x(), p.y(), 1.0);
    a.push_back(p);
    b.emplace_back(q.x() / q.z(), q.y() / q.z());
  }
  for (int i = 0; i < 12; ++i) {  // 30% outliers with targets far off
    const Vec2 p(rng.uniform(40.0, 600.0), rng.uniform(40.0, 440.0));
    const Vec3 q = warp * Vec3(p.x(), p.y(), 1.0);
    a.push_back(p);
    b.emplace_back(q.x() / q.z() + rng.uniform(15.0, 80.0), q.y() / q.z() - rng.uniform(15.0, 80.0));
  }

  RansacConfig config;
  config.inlier_threshold = 3.0;
  config.rng_seed = 3;
  const auto [h, stats] = ransac_homography(a, b, config);

  const ReprojectionErrors errors = reprojection_error(h, a, b);
  for (int i = 0; i < 28; ++i) CHECK(errors.per_point[i] < 0.5);
  std::set<int> inliers(stats.inlier_indices.begin(), stats.inlier_indices.end());
  for (int i = 28; i < 40; ++i) CHECK(inliers.count(i) == 0);
}

TEST_CASE("ransac_homography error paths") {
  RansacConfig config;
  config.inlier_threshold = 3.0;
  std::vector<Vec2> three = {{0, 0}, {10, 0}, {0, 10}};
  CHECK_THROWS_AS(ransac_homography(three, three, config), InsufficientData);
  std::vector<Vec2> four = {{0, 0}, {10, 0}, {0, 10}, {10, 10}};
  std::vector<Vec2> five = {{0, 0}, {10, 0}, {0, 10}, {10, 10}, {5, 5}};
  CHECK_THROWS_AS(ransac_homography(four, five, config), InvalidArgument);
}

TEST_CASE("reprojection_error of the identity mapping is zero") {
  std::vector<Vec2> pts = {{10, 20}, {100, 50}, {300, 200}};
  const ReprojectionErrors e = reprojection_error(Mat3::Identity(), pts, pts);
  CHECK(e.mean == 0.0);
  for (double v : pts.size() ? e.per_point : std::vector<double>{}) CHECK(v == 0.0);
  CHECK(e.excluded.empty());
}

TEST_CASE("reprojection_error vanishes under the exact warp") {
  Mat3 warp;
  warp << 0.9, 0.05, 12.0, -0.03, 1.1, -7.0, 2e-4, 1e-4, 1.0;
  Rng rng(67);
  std::vector<Vec2> a, b;
  for (int i = 0; i < 40; ++i) {
    const Vec2 p(rng.uniform(0.0, 640.0), rng.uniform(0.0, 480.0));
    const Vec3 q = warp * Vec3(p.x(), p.y(), 1.0);
    a.push_back(p);
    b.emplace_back(q.x() / q.z(), q.y() / q.z());
  }
  const ReprojectionErrors e = reprojection_error(warp, a, b);
  CHECK(e.mean < 1e-9);
}

TEST_CASE("reprojection_error flags points mapped to infinity") {
  Mat3 h = Mat3::Identity();
  h(2, 0) = -0.1;  // w = 1 - x/10: the point at x = 10 degenerates
  std::vector<Vec2> a = {{10.0, 2.0}, {4.0, 4.0}};
  std::vector<Vec2> b = {{0.0, 0.0}, {4.0, 4.0}};
  const ReprojectionErrors e = reprojection_error(h, a, b);
  REQUIRE(e.excluded.size() == 1);
  CHECK(e.excluded[0] == 0);
  CHECK(std::isnan(e.per_point[0]));
  // Mean covers only the surviving point: H maps (4,4) to (4/0.6, 4/0.6).
  const double expected = (Vec2(4.0 / 0.6, 4.0 / 0.6) - Vec2(4.0, 4.0)).norm();
  CHECK(e.mean == doctest::Approx(expected).epsilon(1e-12));
}
