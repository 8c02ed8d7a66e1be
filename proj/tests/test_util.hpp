#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "maskvo/geometry.hpp"
#include "maskvo/rng.hpp"

namespace maskvo::testutil {

inline geometry::Vec3 random_unit_vector(Rng& rng) {
  // Marsaglia rejection on the cube.
  while (true) {
    geometry::Vec3 v(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    const double n = v.norm();
    if (n > 1e-3 && n <= 1.0) return v / n;
  }
}

inline geometry::Quaternion random_quaternion(Rng& rng, double max_angle = M_PI - 1e-3) {
  return geometry::Quaternion::from_axis_angle(random_unit_vector(rng),
                                               rng.uniform(0.0, max_angle));
}

inline geometry::Pose random_pose(Rng& rng, double max_angle = M_PI - 1e-3,
                                  double extent = 5.0) {
  return geometry::Pose(random_quaternion(rng, max_angle),
                        geometry::Vec3(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                                       rng.uniform(-extent, extent)));
}

/// Fresh empty directory under the system temp root; caller owns cleanup.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    auto base = std::filesystem::temp_directory_path();
    for (int i = 0;; ++i) {
      path_ = base / (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(i));
      if (!std::filesystem::exists(path_)) break;
    }
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace maskvo::testutil
