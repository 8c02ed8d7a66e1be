#include "maskvo/sfm.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "maskvo/error.hpp"
#include "maskvo/rng.hpp"

namespace maskvo::sfm {

namespace {

// Similarity transform taking the points to centroid 0, RMS radius sqrt(2).
Mat3 hartley_transform(const std::vector<Vec2>& pts) {
  Vec2 centroid = Vec2::Zero();
  for (const Vec2& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double rms = 0.0;
  for (const Vec2& p : pts) rms += (p - centroid).squaredNorm();
  rms = std::sqrt(rms / static_cast<double>(pts.size()));
  if (rms < 1e-14) throw DegenerateInput("point set collapses to a single location");
  const double s = std::sqrt(2.0) / rms;
  Mat3 t = Mat3::Identity();
  t(0, 0) = s;
  t(1, 1) = s;
  t(0, 2) = -s * centroid.x();
  t(1, 2) = -s * centroid.y();
  return t;
}

Vec2 apply_h(const Mat3& t, const Vec2& p, bool* at_infinity = nullptr) {
  const Vec3 q = t * Vec3(p.x(), p.y(), 1.0);
  if (std::abs(q.z()) < 1e-12) {
    if (at_infinity) *at_infinity = true;
    return Vec2::Zero();
  }
  if (at_infinity) *at_infinity = false;
  return Vec2(q.x() / q.z(), q.y() / q.z());
}

// Smallest-singular-vector solution of A h = 0; fails when the nullspace is
// not one-dimensional (rank < cols-1).
bool solve_nullspace(const Eigen::MatrixXd& a, Eigen::VectorXd* h) {
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const int cols = static_cast<int>(a.cols());
  const double scale = sv(0);
  if (scale < 1e-14) return false;
  if (sv(cols - 2) / scale < 1e-10) return false;
  *h = svd.matrixV().col(cols - 1);
  return true;
}

bool linear_fundamental(const std::vector<Correspondence>& corrs, Mat3* out) {
  std::vector<Vec2> pa, pb;
  pa.reserve(corrs.size());
  pb.reserve(corrs.size());
  for (const Correspondence& c : corrs) {
    pa.push_back(c.a);
    pb.push_back(c.b);
  }
  const Mat3 ta = hartley_transform(pa);
  const Mat3 tb = hartley_transform(pb);

  Eigen::MatrixXd a(corrs.size(), 9);
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    const Vec2 p = apply_h(ta, pa[i]);
    const Vec2 q = apply_h(tb, pb[i]);
    a.row(i) << q.x() * p.x(), q.x() * p.y(), q.x(), q.y() * p.x(), q.y() * p.y(), q.y(),
        p.x(), p.y(), 1.0;
  }
  Eigen::VectorXd h;
  if (!solve_nullspace(a, &h)) return false;
  Mat3 f;
  f << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  *out = tb.transpose() * f * ta;
  return true;
}

struct Hypothesis {
  int inlier_count = 0;
  std::vector<int> inlier_indices;
  Mat3 model = Mat3::Zero();
};

// Adaptive iteration bound: iterations needed to draw one all-inlier sample
// of the given size with the requested confidence.
int adaptive_iterations(double inlier_ratio, int sample_size, double confidence,
                        int max_iterations) {
  if (inlier_ratio <= 0.0) return max_iterations;
  const double w = std::pow(std::min(inlier_ratio, 1.0), sample_size);
  if (w >= 1.0 - 1e-15) return 1;
  const double n = std::log(1.0 - confidence) / std::log(1.0 - w);
  if (!(n > 0.0) || n > static_cast<double>(max_iterations)) return max_iterations;
  return static_cast<int>(std::ceil(n));
}

std::vector<int> sample_distinct(Rng& rng, int n, int k) {
  std::vector<int> picks;
  picks.reserve(k);
  while (static_cast<int>(picks.size()) < k) {
    const int c = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    if (std::find(picks.begin(), picks.end(), c) == picks.end()) picks.push_back(c);
  }
  return picks;
}

// Midpoint triangulation in frame a; true when the point lies in front of
// both cameras of the candidate pose (X_b = R X_a + t).
bool in_front_of_both(const PoseCandidate& cand, const Correspondence& c) {
  const Vec3 d1(c.a.x(), c.a.y(), 1.0);
  const Mat3 r = cand.rotation.matrix();
  const Vec3 center_b = -r.transpose() * cand.translation;
  const Vec3 d2 = r.transpose() * Vec3(c.b.x(), c.b.y(), 1.0);

  // Closest points of the two rays: solve for abscissas s, u.
  const double d11 = d1.dot(d1), d12 = d1.dot(d2), d22 = d2.dot(d2);
  const Vec3 w0 = -center_b;  // origin of ray 1 minus origin of ray 2
  const double det = d11 * d22 - d12 * d12;
  if (std::abs(det) < 1e-12) return false;  // near-parallel rays
  const double s = (d12 * d2.dot(w0) - d22 * d1.dot(w0)) / det;
  const double u = (d11 * d2.dot(w0) - d12 * d1.dot(w0)) / det;
  const Vec3 x = 0.5 * (s * d1 + (center_b + u * d2));

  const double depth_a = x.z();
  const double depth_b = (r * x + cand.translation).z();
  return depth_a > 0.0 && depth_b > 0.0;
}

Mat3 fit_homography(const std::vector<Vec2>& a, const std::vector<Vec2>& b,
                    const std::vector<int>& indices) {
  std::vector<Vec2> pa, pb;
  pa.reserve(indices.size());
  pb.reserve(indices.size());
  for (int i : indices) {
    pa.push_back(a[i]);
    pb.push_back(b[i]);
  }
  const Mat3 ta = hartley_transform(pa);
  const Mat3 tb = hartley_transform(pb);

  Eigen::MatrixXd m(2 * indices.size(), 9);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Vec2 p = apply_h(ta, pa[i]);
    const Vec2 q = apply_h(tb, pb[i]);
    m.row(2 * i) << 0, 0, 0, -p.x(), -p.y(), -1, q.y() * p.x(), q.y() * p.y(), q.y();
    m.row(2 * i + 1) << p.x(), p.y(), 1, 0, 0, 0, -q.x() * p.x(), -q.x() * p.y(), -q.x();
  }
  Eigen::VectorXd h;
  if (!solve_nullspace(m, &h)) throw DegenerateInput("homography sample is degenerate");
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Mat3 out = tb.inverse() * hn * ta;
  if (std::abs(out(2, 2)) > 1e-12) out /= out(2, 2);
  return out;
}

// Symmetric transfer error ||H a - b||, ||H^-1 b - a|| combined as an L2 norm;
// infinity when either mapping degenerates.
double symmetric_transfer_error(const Mat3& h, const Mat3& h_inv, const Vec2& a, const Vec2& b) {
  bool inf1 = false, inf2 = false;
  const Vec2 fwd = apply_h(h, a, &inf1);
  const Vec2 bwd = apply_h(h_inv, b, &inf2);
  if (inf1 || inf2) return std::numeric_limits<double>::infinity();
  return std::sqrt((fwd - b).squaredNorm() + (bwd - a).squaredNorm());
}

}  // namespace

EssentialMatrix::EssentialMatrix(const Mat3& m) : m_(m) {
  if (!m.allFinite()) throw InvalidArgument("essential matrix must be finite");
  const Eigen::JacobiSVD<Mat3> svd(m);
  const Vec3 sv = svd.singularValues();
  if (std::abs(sv(0) - 1.0) > 1e-8 || std::abs(sv(1) - 1.0) > 1e-8 || std::abs(sv(2)) > 1e-8) {
    throw InvalidArgument("essential matrix requires singular values (1, 1, 0)");
  }
}

EssentialMatrix EssentialMatrix::project(const Mat3& m) {
  if (!m.allFinite()) throw InvalidArgument("essential matrix must be finite");
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sv = svd.singularValues();
  const double mean = 0.5 * (sv(0) + sv(1));
  if (mean < 1e-14) throw DegenerateInput("matrix projects to the zero essential matrix");
  const Vec3 fixed(1.0, 1.0, 0.0);  // mean/mean scaled to Frobenius sqrt(2)
  const Mat3 e = svd.matrixU() * fixed.asDiagonal() * svd.matrixV().transpose();
  return EssentialMatrix(e, Unchecked{});
}

void RansacConfig::validate() const {
  if (max_iterations < 1) throw InvalidArgument("ransac needs at least one iteration");
  if (!(inlier_threshold > 0.0)) throw InvalidArgument("ransac threshold must be positive");
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw InvalidArgument("ransac confidence must be in (0, 1)");
  }
}

std::vector<Vec2> normalize_points(const std::vector<vision::Keypoint>& kps,
                                   const CameraIntrinsics& K) {
  K.validate();
  std::vector<Vec2> out;
  out.reserve(kps.size());
  for (const vision::Keypoint& kp : kps) {
    out.emplace_back((kp.x - K.cx) / K.fx, (kp.y - K.cy) / K.fy);
  }
  return out;
}

std::vector<Vec2> denormalize_points(const std::vector<Vec2>& pts, const CameraIntrinsics& K) {
  K.validate();
  std::vector<Vec2> out;
  out.reserve(pts.size());
  for (const Vec2& p : pts) {
    out.emplace_back(p.x() * K.fx + K.cx, p.y() * K.fy + K.cy);
  }
  return out;
}

std::vector<Correspondence> make_correspondences(const std::vector<vision::Match>& matches,
                                                 const std::vector<vision::Keypoint>& kps_a,
                                                 const std::vector<vision::Keypoint>& kps_b,
                                                 const CameraIntrinsics& K) {
  K.validate();
  std::vector<Correspondence> out;
  out.reserve(matches.size());
  for (std::size_t i = 0; i < matches.size(); ++i) {
    const vision::Match& m = matches[i];
    if (m.index_a < 0 || m.index_a >= static_cast<int>(kps_a.size()) || m.index_b < 0 ||
        m.index_b >= static_cast<int>(kps_b.size())) {
      throw InvalidArgument("match indices exceed the keypoint lists");
    }
    Correspondence c;
    c.a = Vec2((kps_a[m.index_a].x - K.cx) / K.fx, (kps_a[m.index_a].y - K.cy) / K.fy);
    c.b = Vec2((kps_b[m.index_b].x - K.cx) / K.fx, (kps_b[m.index_b].y - K.cy) / K.fy);
    c.source_match = static_cast<int>(i);
    out.push_back(c);
  }
  return out;
}

double sampson_distance(const Mat3& essential, const Correspondence& c) {
  const Vec3 pa(c.a.x(), c.a.y(), 1.0);
  const Vec3 pb(c.b.x(), c.b.y(), 1.0);
  const Vec3 ea = essential * pa;
  const Vec3 etb = essential.transpose() * pb;
  const double num = std::abs(pb.dot(ea));
  const double den =
      std::sqrt(ea.x() * ea.x() + ea.y() * ea.y() + etb.x() * etb.x() + etb.y() * etb.y());
  if (den < 1e-14) return num > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  return num / den;
}

Mat3 fundamental_linear(const std::vector<Correspondence>& corrs) {
  if (corrs.size() < 8) throw InsufficientData("eight-point needs at least 8 correspondences");
  Mat3 f;
  if (!linear_fundamental(corrs, &f)) {
    throw DegenerateInput("correspondences are in a degenerate configuration");
  }
  return f;
}

EssentialMatrix eight_point(const std::vector<Correspondence>& corrs) {
  return EssentialMatrix::project(fundamental_linear(corrs));
}

std::pair<EssentialMatrix, InlierStats> ransac_essential(
    const std::vector<Correspondence>& corrs, const RansacConfig& config) {
  config.validate();
  const int n = static_cast<int>(corrs.size());
  if (n < 8) throw InsufficientData("essential ransac needs at least 8 correspondences");

  Rng rng(config.rng_seed);
  Hypothesis best;
  int needed = config.max_iterations;
  for (int iter = 0; iter < needed; ++iter) {
    const std::vector<int> picks = sample_distinct(rng, n, 8);
    std::vector<Correspondence> sample;
    sample.reserve(8);
    for (int i : picks) sample.push_back(corrs[i]);

    Mat3 e;
    try {
      e = eight_point(sample).matrix();
    } catch (const DegenerateInput&) {
      continue;
    }

    Hypothesis h;
    h.model = e;
    for (int i = 0; i < n; ++i) {
      if (sampson_distance(e, corrs[i]) < config.inlier_threshold) {
        h.inlier_indices.push_back(i);
      }
    }
    h.inlier_count = static_cast<int>(h.inlier_indices.size());
    if (h.inlier_count > best.inlier_count) {
      best = std::move(h);
      needed = std::min(
          config.max_iterations,
          std::max(iter + 1, adaptive_iterations(static_cast<double>(best.inlier_count) / n, 8,
                                                 config.confidence, config.max_iterations)));
    }
  }
  if (best.inlier_count < 8) {
    throw NoConsensus("no essential hypothesis reached 8 inliers");
  }

  std::vector<Correspondence> consensus;
  consensus.reserve(best.inlier_indices.size());
  for (int i : best.inlier_indices) consensus.push_back(corrs[i]);
  Mat3 refined = best.model;
  try {
    refined = eight_point(consensus).matrix();
  } catch (const DegenerateInput&) {
  }

  InlierStats stats;
  for (int i = 0; i < n; ++i) {
    if (sampson_distance(refined, corrs[i]) < config.inlier_threshold) {
      stats.inlier_indices.push_back(i);
    }
  }
  stats.inlier_count = static_cast<int>(stats.inlier_indices.size());
  if (stats.inlier_count < best.inlier_count) {
    // The consensus refit lost support; keep the raw hypothesis instead.
    refined = best.model;
    stats.inlier_indices = best.inlier_indices;
    stats.inlier_count = best.inlier_count;
  }
  stats.outlier_count = n - stats.inlier_count;
  return {EssentialMatrix(refined), stats};
}

std::array<PoseCandidate, 4> decompose_essential(const EssentialMatrix& essential) {
  Eigen::JacobiSVD<Mat3> svd(essential.matrix(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();

  Mat3 w = Mat3::Zero();
  w(0, 1) = -1.0;
  w(1, 0) = 1.0;
  w(2, 2) = 1.0;

  Mat3 r1 = u * w * v.transpose();
  Mat3 r2 = u * w.transpose() * v.transpose();
  if (r1.determinant() < 0.0) r1 = -r1;
  if (r2.determinant() < 0.0) r2 = -r2;
  const Vec3 t = u.col(2).normalized();

  std::array<PoseCandidate, 4> out;
  out[0] = PoseCandidate{RotationMatrix(r1), t};
  out[1] = PoseCandidate{RotationMatrix(r1), -t};
  out[2] = PoseCandidate{RotationMatrix(r2), t};
  out[3] = PoseCandidate{RotationMatrix(r2), -t};
  return out;
}

CheiralityResult select_pose_cheirality(const std::array<PoseCandidate, 4>& candidates,
                                        const std::vector<Correspondence>& corrs) {
  if (corrs.empty()) throw InsufficientData("cheirality selection needs correspondences");

  std::array<int, 4> counts{};
  for (int k = 0; k < 4; ++k) {
    for (const Correspondence& c : corrs) {
      if (in_front_of_both(candidates[k], c)) ++counts[k];
    }
  }
  int best = 0;
  for (int k = 1; k < 4; ++k) {
    if (counts[k] > counts[best]) best = k;
  }
  std::vector<int> tied;
  for (int k = 0; k < 4; ++k) {
    if (counts[k] == counts[best]) tied.push_back(k);
  }
  if (tied.size() > 1) {
    std::ostringstream msg;
    msg << "cheirality tie between candidates";
    for (int k : tied) msg << ' ' << k;
    msg << " at " << counts[best] << " points in front";
    throw AmbiguousPose(msg.str());
  }
  return CheiralityResult{candidates[best].rotation, candidates[best].translation, counts[best]};
}

std::pair<Mat3, InlierStats> ransac_homography(const std::vector<Vec2>& a,
                                              const std::vector<Vec2>& b,
                                              const RansacConfig& config) {
  config.validate();
  if (a.size() != b.size()) throw InvalidArgument("point lists must have equal length");
  const int n = static_cast<int>(a.size());
  if (n < 4) throw InsufficientData("homography ransac needs at least 4 matches");

  Rng rng(config.rng_seed);
  Hypothesis best;
  int needed = config.max_iterations;
  for (int iter = 0; iter < needed; ++iter) {
    const std::vector<int> picks = sample_distinct(rng, n, 4);
    Mat3 h;
    try {
      h = fit_homography(a, b, picks);
    } catch (const DegenerateInput&) {
      continue;
    }
    const Mat3 h_inv = h.inverse();
    if (!h_inv.allFinite()) continue;

    Hypothesis hyp;
    hyp.model = h;
    for (int i = 0; i < n; ++i) {
      if (symmetric_transfer_error(h, h_inv, a[i], b[i]) < config.inlier_threshold) {
        hyp.inlier_indices.push_back(i);
      }
    }
    hyp.inlier_count = static_cast<int>(hyp.inlier_indices.size());
    if (hyp.inlier_count > best.inlier_count) {
      best = std::move(hyp);
      needed = std::min(
          config.max_iterations,
          std::max(iter + 1, adaptive_iterations(static_cast<double>(best.inlier_count) / n, 4,
                                                 config.confidence, config.max_iterations)));
    }
  }
  if (best.inlier_count < 4) throw NoConsensus("no homography hypothesis reached 4 inliers");

  Mat3 refined = best.model;
  try {
    refined = fit_homography(a, b, best.inlier_indices);
  } catch (const DegenerateInput&) {
  }
  const Mat3 refined_inv = refined.inverse();

  InlierStats stats;
  for (int i = 0; i < n; ++i) {
    if (symmetric_transfer_error(refined, refined_inv, a[i], b[i]) < config.inlier_threshold) {
      stats.inlier_indices.push_back(i);
    }
  }
  stats.inlier_count = static_cast<int>(stats.inlier_indices.size());
  if (stats.inlier_count < best.inlier_count) {
    refined = best.model;
    stats.inlier_indices = best.inlier_indices;
    stats.inlier_count = best.inlier_count;
  }
  stats.outlier_count = n - stats.inlier_count;
  return {refined, stats};
}

ReprojectionErrors reprojection_error(const Mat3& homography, const std::vector<Vec2>& a,
                                      const std::vector<Vec2>& b) {
  if (a.size() != b.size()) throw InvalidArgument("point lists must have equal length");
  if (!homography.allFinite()) throw InvalidArgument("homography must be finite");

  ReprojectionErrors out;
  out.per_point.assign(a.size(), std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  int counted = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    bool inf = false;
    const Vec2 mapped = apply_h(homography, a[i], &inf);
    if (inf) {
      out.excluded.push_back(static_cast<int>(i));
      continue;
    }
    const double err = (mapped - b[i]).norm();
    out.per_point[i] = err;
    sum += err;
    ++counted;
  }
  out.mean = counted > 0 ? sum / counted : 0.0;
  return out;
}

}  // namespace maskvo::sfm
