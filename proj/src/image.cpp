#include "stereosil/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace stereosil {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

ImageU8 load_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error(path + ": cannot open");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(path + ": PNG decode error");
  }

  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const png_byte colour = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (colour == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (colour == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (colour & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(path + ": unsupported channel count after normalisation");
  }

  ImageU8 image(static_cast<int>(w), static_cast<int>(h), channels);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = image.data.data() + static_cast<std::size_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return image;
}

void save_png(const ImageU8& image, const std::string& path) {
  if (image.channels != 1 && image.channels != 3)
    throw std::runtime_error(path + ": only 1- or 3-channel PNG output supported");
  FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw std::runtime_error(path + ": cannot write");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error(path + ": PNG encode error");
  }

  png_init_io(png, fp.get());
  png_set_IHDR(png, info, image.width, image.height, 8,
               image.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<png_bytep> rows(image.height);
  for (int y = 0; y < image.height; ++y)
    rows[y] = const_cast<png_bytep>(image.data.data() +
                                    static_cast<std::size_t>(y) * image.width * image.channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ImageF load_mask_png(const std::string& path, bool binarize) {
  const ImageU8 raw = load_png(path);
  ImageF mask(raw.width, raw.height);
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      double v;
      if (raw.channels == 1) {
        v = raw.at(x, y) / 255.0;
      } else {
        v = (raw.at(x, y, 0) + raw.at(x, y, 1) + raw.at(x, y, 2)) / (3.0 * 255.0);
      }
      mask.at(x, y) = binarize ? (v >= 0.5 ? 1.0 : 0.0) : v;
    }
  }
  return mask;
}

void save_mask_png(const ImageF& mask, const std::string& path) {
  ImageU8 out(mask.width, mask.height, 1);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const double v = std::clamp(mask.at(x, y), 0.0, 1.0);
      out.at(x, y) = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
  save_png(out, path);
}

void save_field(const ImageF& field, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path + ": cannot write");
  out << "field " << field.width << " " << field.height << "\n";
  out.write(reinterpret_cast<const char*>(field.data.data()),
            static_cast<std::streamsize>(field.data.size() * sizeof(double)));
}

ImageF load_field(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path + ": cannot open");
  std::string magic;
  int w = 0, h = 0;
  in >> magic >> w >> h;
  if (magic != "field" || w <= 0 || h <= 0) throw std::runtime_error(path + ": bad field header");
  in.get();
  ImageF field(w, h);
  in.read(reinterpret_cast<char*>(field.data.data()),
          static_cast<std::streamsize>(field.data.size() * sizeof(double)));
  if (!in) throw std::runtime_error(path + ": truncated field payload");
  return field;
}

double intersection_over_union(const ImageF& a, const ImageF& b, double threshold) {
  if (a.width != b.width || a.height != b.height)
    throw std::runtime_error("IoU requires equally sized masks");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const bool pa = a.data[i] >= threshold;
    const bool pb = b.data[i] >= threshold;
    inter += static_cast<std::size_t>(pa && pb);
    uni += static_cast<std::size_t>(pa || pb);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

ImageF downscale_mask(const ImageF& mask, int new_width, int new_height) {
  if (new_width <= 0 || new_height <= 0)
    throw std::runtime_error("downscale_mask: target resolution must be positive");
  if (new_width > mask.width || new_height > mask.height)
    throw std::runtime_error("downscale_mask: target must not exceed the source resolution");
  if (new_width == mask.width && new_height == mask.height) return mask;

  // With integer-grid pixel centres, output pixel i covers the source span
  // [i/s - 0.5, (i+1)/s - 0.5], which always lies inside the source image.
  const double sx = static_cast<double>(new_width) / mask.width;
  const double sy = static_cast<double>(new_height) / mask.height;
  ImageF out(new_width, new_height);
  for (int y = 0; y < new_height; ++y) {
    const double y0 = y / sy - 0.5;
    const double y1 = (y + 1) / sy - 0.5;
    for (int x = 0; x < new_width; ++x) {
      const double x0 = x / sx - 0.5;
      const double x1 = (x + 1) / sx - 0.5;
      double sum = 0, area = 0;
      for (int yy = std::max(0, static_cast<int>(std::floor(y0 + 0.5)));
           yy <= std::min(mask.height - 1, static_cast<int>(std::floor(y1 + 0.5))); ++yy) {
        const double wy = std::min(y1, yy + 0.5) - std::max(y0, yy - 0.5);
        if (wy <= 0) continue;
        for (int xx = std::max(0, static_cast<int>(std::floor(x0 + 0.5)));
             xx <= std::min(mask.width - 1, static_cast<int>(std::floor(x1 + 0.5))); ++xx) {
          const double wx = std::min(x1, xx + 0.5) - std::max(x0, xx - 0.5);
          if (wx <= 0) continue;
          sum += wx * wy * mask.at(xx, yy);
          area += wx * wy;
        }
      }
      out.at(x, y) = (area > 0 && sum / area >= 0.5) ? 1.0 : 0.0;
    }
  }
  return out;
}

}  // namespace stereosil
