#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace maskvo::vision {

/// 8-bit grayscale image, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0);

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }

  /// Dimensions at least 16x16 and pixel buffer consistent.
  void validate() const;
};

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  double score = 0.0;
};

/// 256-bit binary descriptor.
struct Descriptor {
  static constexpr int kBits = 256;
  std::array<std::uint64_t, 4> bits{};

  bool test(int i) const { return (bits[i >> 6] >> (i & 63)) & 1u; }
  void set(int i) { bits[i >> 6] |= std::uint64_t{1} << (i & 63); }
  bool operator==(const Descriptor& o) const { return bits == o.bits; }
};

int hamming_distance(const Descriptor& a, const Descriptor& b);

struct Match {
  int index_a = 0;
  int index_b = 0;
  int distance = 0;
};

/// Block-resolution boolean mask over an image; true blocks are kept.
struct BinaryMask {
  int block_size = 16;
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> grid;  // row-major, 0 or 1

  static BinaryMask for_image(int width, int height, int block_size, bool value);

  bool at(int row, int col) const {
    return grid[static_cast<std::size_t>(row) * cols + col] != 0;
  }
  void set(int row, int col, bool value) {
    grid[static_cast<std::size_t>(row) * cols + col] = value ? 1 : 0;
  }
  int true_count() const;
  double kept_fraction() const;

  /// block_size a positive power of two; grid sized rows*cols.
  void validate() const;
};

/// FAST-9 corners: 16-pixel Bresenham circle, 9 contiguous pixels all brighter
/// or all darker than center by threshold; 3x3 non-maximum suppression on the
/// sum of absolute circle differences; strongest first, truncated to
/// max_keypoints; nothing within 3 px of the border.
std::vector<Keypoint> detect_fast(const Image& img, int threshold, int max_keypoints);

struct BriefDescriptors {
  std::vector<Descriptor> descriptors;
  /// descriptors[i] describes kps[indices[i]]; keypoints closer than 16 px to
  /// the border are dropped.
  std::vector<int> indices;
};

/// 256 intensity comparisons on a seeded random pattern inside a 31x31 patch
/// of the 9x9-box-blurred image. Deterministic per seed.
BriefDescriptors compute_brief(const Image& img, const std::vector<Keypoint>& kps,
                               std::uint64_t pattern_seed);

/// Nearest/second-nearest Hamming matching with Lowe ratio test and mutual
/// cross-check; ascending by distance. A single-entry candidate list falls
/// back to an absolute distance < 64 test.
std::vector<Match> match_bruteforce(const std::vector<Descriptor>& a,
                                    const std::vector<Descriptor>& b, double ratio);

/// Keeps exactly the keypoints whose containing block is true; order preserved.
std::vector<Keypoint> apply_mask(const std::vector<Keypoint>& kps, const BinaryMask& mask);

/// Fraction of image area excluded: 1 - kept_fraction.
double mask_reduction(const BinaryMask& mask);

}  // namespace maskvo::vision
