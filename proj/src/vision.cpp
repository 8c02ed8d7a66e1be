#include "maskvo/vision.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "maskvo/error.hpp"
#include "maskvo/rng.hpp"

namespace maskvo::vision {

namespace {

// 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock.
constexpr int kCircle[16][2] = {
    {0, -3}, {1, -3}, {2, -2},  {3, -1},  {3, 0},   {3, 1},   {2, 2},   {1, 3},
    {0, 3},  {-1, 3}, {-2, 2},  {-3, 1},  {-3, 0},  {-3, -1}, {-2, -2}, {-1, -3}};

constexpr int kBriefPatch = 15;   // half-width of the 31x31 sampling patch
constexpr int kBriefBorder = 16;  // minimum keypoint distance to the border

// Longest circular run of set flags among the 16 circle positions.
int longest_circular_run(const bool flags[16]) {
  int best = 0, run = 0;
  for (int i = 0; i < 32; ++i) {
    if (flags[i & 15]) {
      run = std::min(run + 1, 16);
      best = std::max(best, run);
    } else {
      run = 0;
    }
  }
  return best;
}

// Summed-area table with one row/column of zero padding.
std::vector<double> integral_image(const Image& img) {
  const int w = img.width, h = img.height;
  std::vector<double> integral(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  for (int y = 0; y < h; ++y) {
    double row_sum = 0.0;
    for (int x = 0; x < w; ++x) {
      row_sum += img.at(x, y);
      integral[static_cast<std::size_t>(y + 1) * (w + 1) + (x + 1)] =
          row_sum + integral[static_cast<std::size_t>(y) * (w + 1) + (x + 1)];
    }
  }
  return integral;
}

// Mean over the 9x9 window centered at (x, y), window clipped to the image.
double box_blur_at(const std::vector<double>& integral, int w, int h, int x, int y) {
  const int x0 = std::max(0, x - 4), x1 = std::min(w - 1, x + 4);
  const int y0 = std::max(0, y - 4), y1 = std::min(h - 1, y + 4);
  const auto s = [&](int xi, int yi) {
    return integral[static_cast<std::size_t>(yi) * (w + 1) + xi];
  };
  const double sum = s(x1 + 1, y1 + 1) - s(x0, y1 + 1) - s(x1 + 1, y0) + s(x0, y0);
  return sum / ((x1 - x0 + 1) * (y1 - y0 + 1));
}

}  // namespace

Image::Image(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
  validate();
}

void Image::validate() const {
  if (width < 16 || height < 16) {
    throw InvalidArgument("image must be at least 16x16");
  }
  if (pixels.size() != static_cast<std::size_t>(width) * height) {
    throw InvalidArgument("pixel buffer does not match image dimensions");
  }
}

int hamming_distance(const Descriptor& a, const Descriptor& b) {
  int d = 0;
  for (int i = 0; i < 4; ++i) d += std::popcount(a.bits[i] ^ b.bits[i]);
  return d;
}

BinaryMask BinaryMask::for_image(int width, int height, int block_size, bool value) {
  if (block_size < 1 || (block_size & (block_size - 1)) != 0) {
    throw InvalidArgument("mask block size must be a positive power of two");
  }
  if (width < 1 || height < 1) throw InvalidArgument("mask needs positive image dimensions");
  BinaryMask m;
  m.block_size = block_size;
  m.rows = (height + block_size - 1) / block_size;
  m.cols = (width + block_size - 1) / block_size;
  m.grid.assign(static_cast<std::size_t>(m.rows) * m.cols, value ? 1 : 0);
  return m;
}

int BinaryMask::true_count() const {
  int n = 0;
  for (std::uint8_t v : grid) n += v != 0;
  return n;
}

double BinaryMask::kept_fraction() const {
  validate();
  return static_cast<double>(true_count()) / (static_cast<double>(rows) * cols);
}

void BinaryMask::validate() const {
  if (block_size < 1 || (block_size & (block_size - 1)) != 0) {
    throw InvalidArgument("mask block size must be a positive power of two");
  }
  if (rows < 1 || cols < 1 ||
      grid.size() != static_cast<std::size_t>(rows) * cols) {
    throw InvalidArgument("mask grid does not match its dimensions");
  }
}

std::vector<Keypoint> detect_fast(const Image& img, int threshold, int max_keypoints) {
  img.validate();
  if (threshold < 1 || threshold > 254) {
    throw InvalidArgument("detector threshold must be in [1, 254]");
  }
  if (max_keypoints < 0) throw InvalidArgument("max_keypoints must be non-negative");

  const int w = img.width, h = img.height;
  std::vector<double> score(static_cast<std::size_t>(w) * h, -1.0);  // -1 = not a corner

  for (int y = 3; y <= h - 4; ++y) {
    for (int x = 3; x <= w - 4; ++x) {
      const int center = img.at(x, y);
      bool brighter[16], darker[16];
      for (int i = 0; i < 16; ++i) {
        const int v = img.at(x + kCircle[i][0], y + kCircle[i][1]);
        brighter[i] = v > center + threshold;
        darker[i] = v < center - threshold;
      }
      if (longest_circular_run(brighter) < 9 && longest_circular_run(darker) < 9) continue;
      double sad = 0.0;
      for (int i = 0; i < 16; ++i) {
        sad += std::abs(img.at(x + kCircle[i][0], y + kCircle[i][1]) - center);
      }
      score[static_cast<std::size_t>(y) * w + x] = sad;
    }
  }

  // 3x3 non-maximum suppression among corner candidates: a candidate survives
  // unless some neighbor scores strictly higher (ties are still maxima).
  std::vector<Keypoint> out;
  for (int y = 3; y <= h - 4; ++y) {
    for (int x = 3; x <= w - 4; ++x) {
      const double s = score[static_cast<std::size_t>(y) * w + x];
      if (s < 0.0) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (score[static_cast<std::size_t>(y + dy) * w + (x + dx)] > s) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) out.push_back(Keypoint{static_cast<double>(x), static_cast<double>(y), s});
    }
  }

  std::stable_sort(out.begin(), out.end(), [](const Keypoint& a, const Keypoint& b) {
    return a.score > b.score;
  });
  if (static_cast<int>(out.size()) > max_keypoints) out.resize(max_keypoints);
  return out;
}

BriefDescriptors compute_brief(const Image& img, const std::vector<Keypoint>& kps,
                               std::uint64_t pattern_seed) {
  img.validate();

  // Fixed comparison pattern: 256 point pairs inside the 31x31 patch.
  Rng rng(pattern_seed);
  std::array<std::array<int, 4>, Descriptor::kBits> pattern;
  for (auto& p : pattern) {
    for (int k = 0; k < 4; ++k) {
      p[k] = static_cast<int>(rng.uniform_int(2 * kBriefPatch + 1)) - kBriefPatch;
    }
  }

  const std::vector<double> integral = integral_image(img);
  const int w = img.width, h = img.height;

  BriefDescriptors out;
  for (int i = 0; i < static_cast<int>(kps.size()); ++i) {
    const int cx = static_cast<int>(std::lround(kps[i].x));
    const int cy = static_cast<int>(std::lround(kps[i].y));
    if (cx < kBriefBorder || cy < kBriefBorder || cx > w - 1 - kBriefBorder ||
        cy > h - 1 - kBriefBorder) {
      continue;
    }
    Descriptor d;
    for (int b = 0; b < Descriptor::kBits; ++b) {
      const auto& p = pattern[b];
      const double va = box_blur_at(integral, w, h, cx + p[0], cy + p[1]);
      const double vb = box_blur_at(integral, w, h, cx + p[2], cy + p[3]);
      if (va < vb) d.set(b);
    }
    out.descriptors.push_back(d);
    out.indices.push_back(i);
  }
  return out;
}

std::vector<Match> match_bruteforce(const std::vector<Descriptor>& a,
                                    const std::vector<Descriptor>& b, double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0)) {
    throw InvalidArgument("match ratio must be in (0, 1]");
  }
  if (a.empty() || b.empty()) return {};

  const int na = static_cast<int>(a.size());
  const int nb = static_cast<int>(b.size());

  // Reverse nearest from b into a for the cross-check (lowest index on ties).
  std::vector<int> reverse_best(nb, -1);
  for (int j = 0; j < nb; ++j) {
    int best = 1 << 30;
    for (int i = 0; i < na; ++i) {
      const int d = hamming_distance(a[i], b[j]);
      if (d < best) {
        best = d;
        reverse_best[j] = i;
      }
    }
  }

  std::vector<Match> out;
  for (int i = 0; i < na; ++i) {
    int best = 1 << 30, second = 1 << 30, best_j = -1;
    for (int j = 0; j < nb; ++j) {
      const int d = hamming_distance(a[i], b[j]);
      if (d < best) {
        second = best;
        best = d;
        best_j = j;
      } else if (d < second) {
        second = d;
      }
    }
    const bool keep = nb < 2 ? best < 64 : best < ratio * second;
    if (keep && reverse_best[best_j] == i) {
      out.push_back(Match{i, best_j, best});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Match& x, const Match& y) { return x.distance < y.distance; });
  return out;
}

std::vector<Keypoint> apply_mask(const std::vector<Keypoint>& kps, const BinaryMask& mask) {
  mask.validate();
  std::vector<Keypoint> out;
  for (const Keypoint& kp : kps) {
    const int col = static_cast<int>(std::floor(kp.x / mask.block_size));
    const int row = static_cast<int>(std::floor(kp.y / mask.block_size));
    if (row < 0 || col < 0 || row >= mask.rows || col >= mask.cols) {
      throw InvalidArgument("keypoint falls outside the mask grid");
    }
    if (mask.at(row, col)) out.push_back(kp);
  }
  return out;
}

double mask_reduction(const BinaryMask& mask) { return 1.0 - mask.kept_fraction(); }

}  // namespace maskvo::vision
