#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lipnet/data/clip.hpp"
#include "lipnet/error.hpp"
#include "lipnet/nn/module.hpp"

namespace lipnet::data {

struct Point {
  double x = 0, y = 0;
};

inline constexpr std::size_t kLandmarks = 66;
inline constexpr std::size_t kMouthFirst = 48;  // mouth landmarks are 48..65

/// 66 (x, y) points per frame.
using LandmarkSet = std::vector<std::array<Point, kLandmarks>>;

/// One frame per line, 132 whitespace-separated numbers x0 y0 x1 y1 ...
inline LandmarkSet read_landmarks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open landmarks " + path.string());
  LandmarkSet out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::array<Point, kLandmarks> f{};
    for (auto& p : f) {
      if (!(ls >> p.x >> p.y)) {
        throw DataError(path.string() + ": frame " + std::to_string(out.size()) + " needs 66 coordinate pairs");
      }
    }
    out.push_back(f);
  }
  return out;
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Square crop window in source pixel coordinates.
struct CropBox {
  double cx = 0, cy = 0, side = 0;
};

/// Median of each mouth landmark over frames, bounding box of those medians,
/// expanded by `margin` and squared to its longer side.
inline CropBox mouth_box(const LandmarkSet& lm, double margin = 1.3) {
  if (lm.empty()) throw DataError("crop_mouth: no landmarks");
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  std::vector<double> xs(lm.size()), ys(lm.size());
  for (std::size_t k = kMouthFirst; k < kLandmarks; ++k) {
    for (std::size_t t = 0; t < lm.size(); ++t) {
      xs[t] = lm[t][k].x;
      ys[t] = lm[t][k].y;
    }
    const double mx = median(xs), my = median(ys);
    x0 = std::min(x0, mx);
    x1 = std::max(x1, mx);
    y0 = std::min(y0, my);
    y1 = std::max(y1, my);
  }
  if (!(x1 > x0) || !(y1 > y0)) throw DataError("crop_mouth: degenerate mouth landmark box");
  return {0.5 * (x0 + x1), 0.5 * (y0 + y1), margin * std::max(x1 - x0, y1 - y0)};
}

/// Crops the same mouth-centred square from every frame and resizes it to
/// out x out by bilinear interpolation (samples outside the frame clamp to
/// the border).
inline Frames crop_mouth(const Frames& src, const LandmarkSet& lm, std::size_t out = 122, double margin = 1.3) {
  if (src.T == 0) throw DataError("crop_mouth: no frames");
  if (lm.size() != src.T) {
    throw DataError("crop_mouth: " + std::to_string(lm.size()) + " landmark frames for " + std::to_string(src.T) +
                    " video frames");
  }
  for (const auto& f : lm) {
    for (const auto& p : f) {
      if (p.x < 0 || p.y < 0 || p.x > static_cast<double>(src.W - 1) || p.y > static_cast<double>(src.H - 1)) {
        throw DataError("crop_mouth: landmark outside the frame");
      }
    }
  }
  const CropBox box = mouth_box(lm, margin);
  Frames dst(src.T, out, out);
  const double scale = box.side / static_cast<double>(out);
  const double left = box.cx - 0.5 * box.side, top = box.cy - 0.5 * box.side;
  auto clampd = [](double v, double hi) { return std::clamp(v, 0.0, hi); };
  for (std::size_t i = 0; i < out; ++i) {
    const double sy = clampd(top + (static_cast<double>(i) + 0.5) * scale - 0.5, static_cast<double>(src.H - 1));
    const std::size_t y0 = static_cast<std::size_t>(sy), y1 = std::min(y0 + 1, src.H - 1);
    const double fy = sy - static_cast<double>(y0);
    for (std::size_t j = 0; j < out; ++j) {
      const double sx = clampd(left + (static_cast<double>(j) + 0.5) * scale - 0.5, static_cast<double>(src.W - 1));
      const std::size_t x0 = static_cast<std::size_t>(sx), x1 = std::min(x0 + 1, src.W - 1);
      const double fx = sx - static_cast<double>(x0);
      for (std::size_t t = 0; t < src.T; ++t) {
        const double v = (1 - fy) * ((1 - fx) * src.at(t, y0, x0) + fx * src.at(t, y0, x1)) +
                         fy * ((1 - fx) * src.at(t, y1, x0) + fx * src.at(t, y1, x1));
        dst.at(t, i, j) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return dst;
}

struct AugmentSpec {
  int max_offset = 5;
  double flip_probability = 0.5;
  bool enabled = true;
};

/// One crop offset and flip decision, shared by every frame of a clip.
struct View {
  int dx = 0, dy = 0;
  bool flip = false;
  friend bool operator==(const View&, const View&) = default;
};

inline View draw_view(nn::Rng& rng, const AugmentSpec& spec) {
  if (!spec.enabled) return {};
  View v;
  v.dx = static_cast<int>(nn::uniform_int(rng, -spec.max_offset, spec.max_offset));
  v.dy = static_cast<int>(nn::uniform_int(rng, -spec.max_offset, spec.max_offset));
  v.flip = nn::uniform01(rng) < spec.flip_probability;
  return v;
}

/// Model input extent for stored frames: the stored size minus the jitter margin.
inline std::size_t crop_extent(std::size_t stored, const AugmentSpec& spec = {}) {
  const std::size_t margin = 2 * static_cast<std::size_t>(spec.max_offset);
  if (stored <= margin) throw DataError("stored frames of " + std::to_string(stored) + " pixels are too small to crop");
  return stored - margin;
}

namespace detail {

inline void check_view(const Frames& f, const View& v, std::size_t crop) {
  const long mh = (static_cast<long>(f.H) - static_cast<long>(crop)) / 2;
  const long mw = (static_cast<long>(f.W) - static_cast<long>(crop)) / 2;
  if (mh < std::abs(v.dy) || mw < std::abs(v.dx) || f.H < crop || f.W < crop) {
    throw DataError("stored frames " + std::to_string(f.H) + "x" + std::to_string(f.W) + " too small for a " +
                    std::to_string(crop) + " crop at offset (" + std::to_string(v.dx) + "," + std::to_string(v.dy) +
                    ")");
  }
}

// Calls put(t, y, x, pixel) for every pixel of the view.
template <class Put>
void for_each_view_pixel(const Frames& f, const View& v, std::size_t crop, Put put) {
  check_view(f, v, crop);
  const std::size_t top = static_cast<std::size_t>(static_cast<long>((f.H - crop) / 2) + v.dy);
  const std::size_t left = static_cast<std::size_t>(static_cast<long>((f.W - crop) / 2) + v.dx);
  for (std::size_t t = 0; t < f.T; ++t) {
    for (std::size_t y = 0; y < crop; ++y) {
      const std::uint8_t* row = &f.px[(t * f.H + top + y) * f.W + left];
      for (std::size_t x = 0; x < crop; ++x) put(t, y, x, row[v.flip ? crop - 1 - x : x]);
    }
  }
}

}  // namespace detail

/// The crop x crop view of every frame (offset around the centre, optional flip).
inline Frames view_frames(const Frames& f, const View& v, std::size_t crop) {
  Frames out(f.T, crop, crop);
  detail::for_each_view_pixel(f, v, crop,
                              [&](std::size_t t, std::size_t y, std::size_t x, std::uint8_t p) { out.at(t, y, x) = p; });
  return out;
}

inline Frames flip_horizontal(const Frames& f) {
  Frames out(f.T, f.H, f.W);
  for (std::size_t t = 0; t < f.T; ++t)
    for (std::size_t y = 0; y < f.H; ++y)
      for (std::size_t x = 0; x < f.W; ++x) out.at(t, y, x) = f.at(t, y, f.W - 1 - x);
  return out;
}

inline float normalize_pixel(std::uint8_t p, double mean, double std) {
  return static_cast<float>((static_cast<double>(p) / 255.0 - mean) / std);
}

/// Writes the normalized view, T*crop*crop floats, to out.
inline void extract_view(const Frames& f, const View& v, std::size_t crop, double mean, double std, float* out) {
  if (!(std > 0.0)) throw DataError("normalize: global_std must be positive");
  float lut[256];
  for (int p = 0; p < 256; ++p) lut[p] = normalize_pixel(static_cast<std::uint8_t>(p), mean, std);
  detail::for_each_view_pixel(f, v, crop, [&](std::size_t t, std::size_t y, std::size_t x, std::uint8_t p) {
    out[(t * crop + y) * crop + x] = lut[p];
  });
}

/// Accumulates the scalar mean and standard deviation of pixel/255.
class PixelStats {
 public:
  void add(const Frames& f) {
    for (std::uint8_t p : f.px) ++hist_[p];
    n_ += f.px.size();
  }

  /// {mean, std}; throws DataError when there are no pixels or they are constant.
  std::pair<double, double> result() const {
    if (n_ == 0) throw DataError("pixel statistics: no training pixels");
    long double s = 0, s2 = 0;
    for (int p = 0; p < 256; ++p) {
      const long double v = static_cast<long double>(p) / 255.0L;
      s += v * hist_[p];
      s2 += v * v * hist_[p];
    }
    const long double mean = s / n_;
    const long double var = std::max<long double>(0, s2 / n_ - mean * mean);
    const double sd = std::sqrt(static_cast<double>(var));
    if (!(sd > 1e-12)) throw DataError("pixel statistics: training pixels are constant (global_std = 0)");
    return {static_cast<double>(mean), sd};
  }

 private:
  std::array<std::uint64_t, 256> hist_{};
  std::uint64_t n_ = 0;
};

}  // namespace lipnet::data
