#include "maskvo/imu.hpp"

#include <algorithm>
#include <cmath>

#include "maskvo/error.hpp"
#include "maskvo/rng.hpp"

namespace maskvo::imu {

namespace {

using geometry::quat_log;

void check_sorted(const std::vector<double>& ts, const char* what) {
  for (std::size_t i = 1; i < ts.size(); ++i) {
    if (!(ts[i] > ts[i - 1])) {
      throw InvalidArgument(std::string(what) + " timestamps must be strictly increasing");
    }
  }
}

struct InterpolatedSignal {
  const std::vector<ImuSample>& samples;

  // Piecewise-linear accel/gyro value at time t; t must be inside the span.
  ImuSample at(double t) const {
    const auto it = std::upper_bound(
        samples.begin(), samples.end(), t,
        [](double v, const ImuSample& s) { return v < s.timestamp; });
    if (it == samples.begin()) return samples.front();
    if (it == samples.end()) return samples.back();
    const ImuSample& b = *it;
    const ImuSample& a = *(it - 1);
    const double span = b.timestamp - a.timestamp;
    const double u = span > 0.0 ? (t - a.timestamp) / span : 0.0;
    ImuSample out;
    out.timestamp = t;
    out.accel = (1.0 - u) * a.accel + u * b.accel;
    out.gyro = (1.0 - u) * a.gyro + u * b.gyro;
    return out;
  }
};

}  // namespace

void ImuNoiseParams::validate() const {
  if (accel_noise_std < 0.0 || gyro_noise_std < 0.0 || accel_bias_walk_std < 0.0 ||
      gyro_bias_walk_std < 0.0) {
    throw InvalidArgument("noise standard deviations must be non-negative");
  }
  const double g = gravity.norm();
  if (g != 0.0 && (g < 9.7 || g > 9.9)) {
    throw InvalidArgument("gravity magnitude must be zero or within [9.7, 9.9] m/s^2");
  }
}

ImuState integrate_step(const ImuState& state, const ImuSample& sample, double dt,
                        const Vec3& gravity) {
  if (!(dt > 0.0)) throw InvalidArgument("integration step requires dt > 0");
  if (!sample.accel.allFinite() || !sample.gyro.allFinite()) {
    throw InvalidArgument("imu sample must be finite");
  }

  const Vec3 rate = sample.gyro - state.gyro_bias;
  const Quaternion q_mid = state.orientation * Quaternion::exp(rate * (0.5 * dt));
  const Vec3 accel_world = q_mid.rotate(sample.accel - state.accel_bias) + gravity;

  ImuState next = state;
  next.orientation = state.orientation * Quaternion::exp(rate * dt);
  next.position = state.position + state.velocity * dt + 0.5 * dt * dt * accel_world;
  next.velocity = state.velocity + accel_world * dt;
  return next;
}

std::vector<Pose> integrate_window(const ImuWindow& window, const Vec3& gravity) {
  if (window.samples.empty()) throw InvalidArgument("imu window has no samples");
  if (window.frame_timestamps.size() < 2) {
    throw InvalidArgument("imu window needs at least two frame timestamps");
  }
  check_sorted(window.frame_timestamps, "frame");
  const double t_begin = window.frame_timestamps.front();
  const double t_end = window.frame_timestamps.back();
  if (window.samples.front().timestamp > t_begin + 1e-12 ||
      window.samples.back().timestamp < t_end - 1e-12) {
    throw InvalidArgument("imu samples do not span the window's frame timestamps");
  }

  // Step boundaries: every sample time and frame time inside [t_begin, t_end].
  std::vector<double> boundaries;
  boundaries.push_back(t_begin);
  for (const ImuSample& s : window.samples) {
    if (s.timestamp > t_begin + 1e-12 && s.timestamp < t_end - 1e-12) {
      boundaries.push_back(s.timestamp);
    }
  }
  for (std::size_t i = 1; i + 1 < window.frame_timestamps.size(); ++i) {
    boundaries.push_back(window.frame_timestamps[i]);
  }
  boundaries.push_back(t_end);
  std::sort(boundaries.begin(), boundaries.end());

  InterpolatedSignal signal{window.samples};
  ImuState state = window.start_state;
  const Pose anchor = state.pose();

  std::vector<Pose> out;
  out.reserve(window.frame_timestamps.size());
  out.push_back(Pose::identity());

  std::size_t next_frame = 1;
  for (std::size_t i = 1; i < boundaries.size(); ++i) {
    const double u = boundaries[i - 1];
    const double v = boundaries[i];
    const double dt = v - u;
    if (dt > 1e-12) {
      // Trapezoidal average over the step of the piecewise-linear signal.
      const ImuSample sa = signal.at(u);
      const ImuSample sb = signal.at(v);
      ImuSample mid;
      mid.timestamp = 0.5 * (u + v);
      mid.accel = 0.5 * (sa.accel + sb.accel);
      mid.gyro = 0.5 * (sa.gyro + sb.gyro);
      state = integrate_step(state, mid, dt, gravity);
    }
    while (next_frame < window.frame_timestamps.size() &&
           std::abs(window.frame_timestamps[next_frame] - v) <= 1e-12) {
      out.push_back(geometry::relative_pose(anchor, state.pose()));
      ++next_frame;
    }
  }
  if (out.size() != window.frame_timestamps.size()) {
    throw InvalidArgument("frame timestamps must lie on integration boundaries");
  }
  return out;
}

std::vector<ImuSample> simulate_measurements(const TrajectorySamples& trajectory,
                                             const ImuNoiseParams& params) {
  params.validate();
  const std::size_t n = trajectory.timestamps.size();
  if (n < 3) throw InvalidArgument("trajectory needs at least 3 samples");
  if (trajectory.poses.size() != n) {
    throw InvalidArgument("trajectory timestamps and poses must have equal length");
  }
  check_sorted(trajectory.timestamps, "trajectory");
  const double dt = trajectory.timestamps[1] - trajectory.timestamps[0];
  for (std::size_t i = 1; i < n; ++i) {
    const double step = trajectory.timestamps[i] - trajectory.timestamps[i - 1];
    if (std::abs(step - dt) > 1e-9 * std::max(1.0, std::abs(dt))) {
      throw InvalidArgument("trajectory must be uniformly sampled");
    }
  }

  const auto& p = trajectory.poses;

  // World-frame acceleration by second central difference (second-order
  // one-sided at the ends when enough samples exist).
  auto accel_at = [&](std::size_t k) -> Vec3 {
    if (k == 0) {
      if (n >= 4) {
        return (2.0 * p[0].translation - 5.0 * p[1].translation + 4.0 * p[2].translation -
                p[3].translation) /
               (dt * dt);
      }
      k = 1;
    } else if (k == n - 1) {
      if (n >= 4) {
        return (2.0 * p[n - 1].translation - 5.0 * p[n - 2].translation +
                4.0 * p[n - 3].translation - p[n - 4].translation) /
               (dt * dt);
      }
      k = n - 2;
    }
    return (p[k + 1].translation - 2.0 * p[k].translation + p[k - 1].translation) / (dt * dt);
  };

  // Body rate midway through interval k -> k+1.
  auto rate_mid = [&](std::size_t k) -> Vec3 {
    return quat_log(p[k].rotation.conjugate() * p[k + 1].rotation) / dt;
  };
  // Body rate at sample k: central average of the two midpoints, linear
  // extrapolation at the ends.
  auto rate_at = [&](std::size_t k) -> Vec3 {
    if (k == 0) return 1.5 * rate_mid(0) - 0.5 * rate_mid(1);
    if (k == n - 1) return 1.5 * rate_mid(n - 2) - 0.5 * rate_mid(n - 3);
    return 0.5 * (rate_mid(k - 1) + rate_mid(k));
  };

  Rng rng(params.rng_seed);
  Vec3 bias_a = params.accel_bias;
  Vec3 bias_w = params.gyro_bias;

  std::vector<ImuSample> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    ImuSample s;
    s.timestamp = trajectory.timestamps[k];
    Vec3 noise_a = Vec3::Zero();
    Vec3 noise_w = Vec3::Zero();
    for (int i = 0; i < 3; ++i) noise_a(i) = rng.gaussian(0.0, params.accel_noise_std);
    for (int i = 0; i < 3; ++i) noise_w(i) = rng.gaussian(0.0, params.gyro_noise_std);
    const Quaternion q_inv = p[k].rotation.conjugate();
    s.accel = q_inv.rotate(accel_at(k) - params.gravity) + bias_a + noise_a;
    s.gyro = rate_at(k) + bias_w + noise_w;
    out.push_back(s);

    if (params.accel_bias_walk_std > 0.0) {
      for (int i = 0; i < 3; ++i) {
        bias_a(i) += rng.gaussian(0.0, params.accel_bias_walk_std * std::sqrt(dt));
      }
    }
    if (params.gyro_bias_walk_std > 0.0) {
      for (int i = 0; i < 3; ++i) {
        bias_w(i) += rng.gaussian(0.0, params.gyro_bias_walk_std * std::sqrt(dt));
      }
    }
  }
  return out;
}

std::vector<WindowProxies> window_proxies(const std::vector<ImuSample>& imu_stream,
                                          const std::vector<double>& frame_timestamps, int W,
                                          const std::vector<ImuState>& start_states,
                                          const Vec3& gravity) {
  if (W < 2) throw InvalidArgument("window size must be at least 2 frame intervals");
  const int frames = static_cast<int>(frame_timestamps.size());
  if (W > frames - 1) {
    throw InvalidArgument("window size exceeds the available frame intervals");
  }
  check_sorted(frame_timestamps, "frame");
  const int window_count = (frames - 1) / W;
  if (!start_states.empty() && static_cast<int>(start_states.size()) < window_count) {
    throw InvalidArgument("need one start state per window");
  }

  std::vector<WindowProxies> out;
  out.reserve(window_count);
  for (int wi = 0; wi < window_count; ++wi) {
    ImuWindow window;
    window.frame_timestamps.assign(frame_timestamps.begin() + wi * W,
                                   frame_timestamps.begin() + wi * W + W + 1);
    window.start_state = start_states.empty() ? ImuState{} : start_states[wi];
    const double t0 = window.frame_timestamps.front();
    const double t1 = window.frame_timestamps.back();
    // Bracket the window: last sample at/before t0 through first sample at/after t1.
    const auto first_after = std::upper_bound(
        imu_stream.begin(), imu_stream.end(), t0 + 1e-12,
        [](double v, const ImuSample& s) { return v < s.timestamp; });
    if (first_after == imu_stream.begin()) {
      throw InvalidArgument("imu stream starts after a window's first frame");
    }
    const auto lo = first_after - 1;
    const auto hi = std::lower_bound(
        imu_stream.begin(), imu_stream.end(), t1 - 1e-12,
        [](const ImuSample& s, double v) { return s.timestamp < v; });
    if (hi == imu_stream.end()) {
      throw InvalidArgument("imu stream ends before a window's last frame");
    }
    window.samples.assign(lo, hi + 1);
    const std::vector<Pose> cumulative = integrate_window(window, gravity);

    WindowProxies wp;
    wp.window_index = wi;
    wp.proxies.reserve(W);
    for (int j = 1; j <= W; ++j) {
      wp.proxies.push_back(geometry::relative_pose(cumulative[j - 1], cumulative[j]));
    }
    out.push_back(std::move(wp));
  }
  return out;
}

}  // namespace maskvo::imu
