#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stereosil {

/// Row-major single-channel image of doubles. Used for silhouettes (values in
/// [0,1]), distance fields, and anything else per-pixel scalar.
struct ImageF {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  ImageF() = default;
  ImageF(int w, int h, double fill = 0.0) : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  double& at(int x, int y) { return data[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
  std::size_t pixel_count() const { return data.size(); }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

/// Row-major interleaved 8-bit image, 1 or 3 channels.
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;

  ImageU8() = default;
  ImageU8(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
};

ImageU8 load_png(const std::string& path);
void save_png(const ImageU8& image, const std::string& path);

/// Grey PNG <-> [0,1] mask conversion. Loading thresholds at 0.5 when
/// `binarize` is set, otherwise keeps the 8-bit quantisation as value/255.
ImageF load_mask_png(const std::string& path, bool binarize = true);
void save_mask_png(const ImageF& mask, const std::string& path);

/// Raw little-endian float64 dump with a small text header, for debugging and
/// for tests that need bit-exact persistence.
void save_field(const ImageF& field, const std::string& path);
ImageF load_field(const std::string& path);

double intersection_over_union(const ImageF& a, const ImageF& b, double threshold = 0.5);

/// Area-averaged resample to a lower resolution, then threshold at 0.5 back
/// to a binary mask. Pixel centres sit on the integer grid in both images.
ImageF downscale_mask(const ImageF& mask, int new_width, int new_height);

}  // namespace stereosil
