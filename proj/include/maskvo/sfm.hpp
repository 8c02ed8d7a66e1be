#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "maskvo/geometry.hpp"
#include "maskvo/vision.hpp"

namespace maskvo::sfm {

using geometry::CameraIntrinsics;
using geometry::Mat3;
using geometry::RotationMatrix;
using geometry::Vec2;
using geometry::Vec3;

/// A matched point pair in normalized camera coordinates.
struct Correspondence {
  Vec2 a = Vec2::Zero();
  Vec2 b = Vec2::Zero();
  int source_match = -1;
};

/// 3x3 matrix with singular values (1, 1, 0) and Frobenius norm sqrt(2).
class EssentialMatrix {
 public:
  explicit EssentialMatrix(const Mat3& m);

  /// Projects an arbitrary matrix onto the essential manifold: singular
  /// values replaced by their mean (sigma1+sigma2)/2 twice and 0, then the
  /// result is scaled to Frobenius norm sqrt(2).
  static EssentialMatrix project(const Mat3& m);

  const Mat3& matrix() const { return m_; }

 private:
  struct Unchecked {};
  EssentialMatrix(const Mat3& m, Unchecked) : m_(m) {}
  Mat3 m_;
};

struct RansacConfig {
  int max_iterations = 2000;
  /// Sampson distance in normalized coordinates for the essential solver;
  /// pixels of symmetric transfer error for homographies.
  double inlier_threshold = 1e-3;
  double confidence = 0.999;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct InlierStats {
  int inlier_count = 0;
  int outlier_count = 0;
  std::vector<int> inlier_indices;
};

struct PoseCandidate {
  RotationMatrix rotation;
  Vec3 translation = Vec3::Zero();  // unit length; scale unobservable
};

struct CheiralityResult {
  RotationMatrix rotation;
  Vec3 translation = Vec3::Zero();
  int positive_depth_count = 0;
};

struct ReprojectionErrors {
  double mean = 0.0;
  /// Aligned with the input; entries excluded for mapping near the plane at
  /// infinity hold NaN and are listed in excluded.
  std::vector<double> per_point;
  std::vector<int> excluded;
};

/// Pixel -> normalized camera coordinates: ((x-cx)/fx, (y-cy)/fy).
std::vector<Vec2> normalize_points(const std::vector<vision::Keypoint>& kps,
                                   const CameraIntrinsics& K);
std::vector<Vec2> denormalize_points(const std::vector<Vec2>& pts, const CameraIntrinsics& K);

/// Builds normalized correspondences from descriptor matches.
std::vector<Correspondence> make_correspondences(const std::vector<vision::Match>& matches,
                                                 const std::vector<vision::Keypoint>& kps_a,
                                                 const std::vector<vision::Keypoint>& kps_b,
                                                 const CameraIntrinsics& K);

/// First-order (Sampson) epipolar distance of one correspondence.
double sampson_distance(const Mat3& essential, const Correspondence& c);

/// Hartley-normalized linear epipolar estimate (the fundamental-matrix stage
/// of the eight-point solver, before projection onto the essential manifold).
Mat3 fundamental_linear(const std::vector<Correspondence>& corrs);

/// Hartley-normalized eight-point estimate projected onto the essential
/// manifold. The b-side point obeys b^T E a = 0 for the relative pose
/// X_b = R X_a + t with E = [t]x R.
EssentialMatrix eight_point(const std::vector<Correspondence>& corrs);

/// RANSAC over eight-point hypotheses with Sampson scoring; the winner is
/// refit on its consensus set. Deterministic per seed.
std::pair<EssentialMatrix, InlierStats> ransac_essential(
    const std::vector<Correspondence>& corrs, const RansacConfig& config);

/// SVD factorization candidates {UWV^T, UW^T V^T} x {+-u3}.
std::array<PoseCandidate, 4> decompose_essential(const EssentialMatrix& essential);

/// Midpoint-triangulates every correspondence under each candidate and keeps
/// the candidate with the most points in front of both cameras.
CheiralityResult select_pose_cheirality(const std::array<PoseCandidate, 4>& candidates,
                                        const std::vector<Correspondence>& corrs);

/// RANSAC over 4-point DLT homographies in pixel coordinates, scored by
/// symmetric transfer error; the winner is refit on its consensus set.
std::pair<Mat3, InlierStats> ransac_homography(const std::vector<Vec2>& a,
                                               const std::vector<Vec2>& b,
                                               const RansacConfig& config);

/// Per-point ||project(H, a_i) - b_i|| in pixels and its mean.
ReprojectionErrors reprojection_error(const Mat3& homography, const std::vector<Vec2>& a,
                                      const std::vector<Vec2>& b);

}  // namespace maskvo::sfm
