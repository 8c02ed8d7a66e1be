#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "maskvo/geometry.hpp"
#include "maskvo/imu.hpp"
#include "maskvo/vision.hpp"

namespace maskvo::data {

struct FrameEntry {
  double timestamp = 0.0;
  std::string image;  // path relative to the manifest directory
};

struct DatasetManifest {
  std::string root;  // directory the relative paths resolve against
  std::vector<FrameEntry> frames;
  std::string imu_file;
  std::string groundtruth_file;
  std::string groundtruth_format;  // "kitti" | "tum"
  geometry::CameraIntrinsics intrinsics;

  std::string image_path(int index) const;
  std::string imu_path() const;
  std::string groundtruth_path() const;

  /// Strictly increasing frame timestamps, known ground-truth format, valid
  /// intrinsics. Does not touch the filesystem.
  void validate() const;
};

/// Parses and validates manifest JSON; missing referenced files are collected
/// and reported together in a single error.
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& manifest);

struct GroundTruthPose {
  double timestamp = 0.0;
  geometry::Pose pose;  // world-from-camera
};

/// Lines of 12 floats (row-major 3x4 [R|t]); rotations further than 1e-6 from
/// orthonormal are projected back via SVD. Timestamps are index / frame_rate.
std::vector<GroundTruthPose> load_kitti_poses(const std::string& path, double frame_rate = 10.0);
void save_kitti_poses(const std::string& path, const std::vector<GroundTruthPose>& poses);

/// `t tx ty tz qx qy qz qw` per line, quaternion scalar-last on disk.
std::vector<GroundTruthPose> load_tum_poses(const std::string& path);
void save_tum_poses(const std::string& path, const std::vector<GroundTruthPose>& poses);

/// Dispatches on the manifest's ground-truth format. KITTI timestamps are
/// replaced by the manifest's frame timestamps (counts must agree).
std::vector<GroundTruthPose> load_groundtruth(const DatasetManifest& manifest);

/// CSV with header `t,ax,ay,az,wx,wy,wz`; strictly increasing timestamps.
std::vector<imu::ImuSample> load_imu_csv(const std::string& path);
void save_imu_csv(const std::string& path, const std::vector<imu::ImuSample>& samples);

/// Binary 8-bit PGM (P5). The only built-in image codec.
vision::Image load_pgm(const std::string& path);
void save_pgm(const std::string& path, const vision::Image& img);

/// Block-resolution mask as PGM (0 = excluded, 255 = kept) plus a JSON
/// sidecar `{block_size, kept_fraction}` at `<path>.json`.
void save_mask(const std::string& path, const vision::BinaryMask& mask);
vision::BinaryMask load_mask(const std::string& path);

/// Externally injected detections for one frame: text file, line 1 `K D`
/// (keypoint count, descriptor bit length), then K lines `x y score hexbits`.
struct Detections {
  std::vector<vision::Keypoint> keypoints;
  std::vector<vision::Descriptor> descriptors;  // one per keypoint
};

Detections load_detections(const std::string& path);
void save_detections(const std::string& path, const Detections& detections);

enum class TrajectoryKind { kCircle, kFigureEight, kStraight };

struct SyntheticSceneConfig {
  int point_count = 300;
  double extent = 4.0;  // world points uniform in a cube of this side length
  TrajectoryKind trajectory = TrajectoryKind::kCircle;
  double radius = 10.0;  // circle radius; standoff distance for the others
  double speed = 1.0;    // meters per second along the path
  int frame_count = 100;
  double frame_rate = 10.0;
  double imu_rate = 200.0;
  geometry::CameraIntrinsics intrinsics{48.0, 48.0, 32.0, 32.0, 64, 64};
  imu::ImuNoiseParams noise;  // zero-noise default
  bool export_detections = false;
  std::uint64_t rng_seed = 0;

  /// imu_rate >= 10x frame_rate, point_count >= 50, camera path outside the
  /// point cloud, valid intrinsics.
  void validate() const;
};

/// JSON config with every field optional (defaults above).
SyntheticSceneConfig load_scene_config(const std::string& path);

/// Closed-form world-from-camera pose of the configured trajectory at time t.
geometry::Pose scene_pose_at(const SyntheticSceneConfig& config, double t);

/// Writes frames/ (PGM), imu.csv, groundtruth.txt (TUM), manifest.json, and
/// optionally detections/ with exact projected keypoints, then returns the
/// loaded manifest. Deterministic per seed.
DatasetManifest synth_generate(const SyntheticSceneConfig& config, const std::string& out_dir);

}  // namespace maskvo::data
