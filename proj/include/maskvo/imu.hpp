#pragma once

#include <cstdint>
#include <vector>

#include "maskvo/geometry.hpp"

namespace maskvo::imu {

using geometry::Pose;
using geometry::Quaternion;
using geometry::Vec3;

/// World-frame gravity used throughout unless a caller overrides it.
inline const Vec3 kGravity{0.0, 0.0, -9.81};

/// One inertial measurement: specific force and body angular rate.
struct ImuSample {
  double timestamp = 0.0;  // seconds
  Vec3 accel = Vec3::Zero();  // m/s^2, measured specific force
  Vec3 gyro = Vec3::Zero();   // rad/s, measured body rate
};

struct ImuNoiseParams {
  Vec3 accel_bias = Vec3::Zero();
  Vec3 gyro_bias = Vec3::Zero();
  double accel_noise_std = 0.0;
  double gyro_noise_std = 0.0;
  /// Bias random-walk densities; zero keeps biases constant.
  double accel_bias_walk_std = 0.0;
  double gyro_bias_walk_std = 0.0;
  Vec3 gravity = kGravity;
  std::uint64_t rng_seed = 0;

  /// Noise stds non-negative; |gravity| in [9.7, 9.9] or exactly zero.
  void validate() const;
};

/// Strapdown navigation state.
struct ImuState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Quaternion orientation;  // world from body
  Vec3 accel_bias = Vec3::Zero();
  Vec3 gyro_bias = Vec3::Zero();

  Pose pose() const { return Pose(orientation, position); }
};

/// A burst of samples covering W consecutive frame intervals.
struct ImuWindow {
  std::vector<ImuSample> samples;
  ImuState start_state;                   // state at frame_timestamps.front()
  std::vector<double> frame_timestamps;   // W+1 strictly increasing times

  int window_size() const { return static_cast<int>(frame_timestamps.size()) - 1; }
};

/// Densely and uniformly sampled ground-truth trajectory (world-from-body poses).
struct TrajectorySamples {
  std::vector<double> timestamps;
  std::vector<Pose> poses;
};

struct WindowProxies {
  int window_index = 0;
  /// One relative pose per frame interval, interval j mapping frame j+1's
  /// body frame into frame j's.
  std::vector<Pose> proxies;
};

/// One strapdown step: midpoint update of (p, v), exact quaternion
/// exponential for orientation at the given rate. Biases carried unchanged.
ImuState integrate_step(const ImuState& state, const ImuSample& sample, double dt,
                        const Vec3& gravity = kGravity);

/// Integrates the window's samples across its frame boundaries. Returns one
/// pose per boundary relative to the first frame (index 0 is identity).
std::vector<Pose> integrate_window(const ImuWindow& window, const Vec3& gravity = kGravity);

/// Emits measurements a_m = C^-1(a_true - g) + b_a + n, w_m = w + b_w + n from a
/// uniformly sampled trajectory; derivatives by central differences.
/// Deterministic per params.rng_seed.
std::vector<ImuSample> simulate_measurements(const TrajectorySamples& trajectory,
                                             const ImuNoiseParams& params);

/// Partitions frames into consecutive windows of W intervals and integrates
/// each window from its own start (drift resets per window). Trailing frames
/// that do not fill a window are dropped. start_states, when given, supplies
/// one initial state per window; default is the identity state.
std::vector<WindowProxies> window_proxies(const std::vector<ImuSample>& imu_stream,
                                          const std::vector<double>& frame_timestamps, int W,
                                          const std::vector<ImuState>& start_states = {},
                                          const Vec3& gravity = kGravity);

}  // namespace maskvo::imu
