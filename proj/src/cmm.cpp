#include "stereosil/cmm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "stereosil/rng.hpp"

namespace stereosil {

void CmmConfig::validate() const {
  if (batch_size < 2) throw std::runtime_error("cmm config: batch size must be at least 2");
  if (!(scale_min >= 1.0 && scale_max <= 1.8 && scale_min <= scale_max))
    throw std::runtime_error("cmm config: affine scale range must stay within [1.0, 1.8]");
  for (double p : {hflip_probability, affine_probability, photometric_probability})
    if (!(p >= 0 && p <= 1)) throw std::runtime_error("cmm config: probabilities must lie in [0, 1]");
  if (rotation_max_deg < 0 || translation_max_fraction < 0)
    throw std::runtime_error("cmm config: transform ranges must be nonnegative");
}

namespace {

struct TransformedItem {
  ImageU8 image;
  ImageF mask;
};

/// Apply flip-then-affine with one nearest-neighbour resample, mapping output
/// pixels back through the inverse so image and mask stay aligned.
TransformedItem apply_geometric(const ImageU8& image, const ImageF& mask,
                                const CmmTransformLog& t) {
  TransformedItem out;
  out.image = ImageU8(image.width, image.height, image.channels, 0);
  out.mask = ImageF(mask.width, mask.height, 0.0);
  const double cx = (image.width - 1) / 2.0;
  const double cy = (image.height - 1) / 2.0;
  const double rad = t.rotation_deg * M_PI / 180.0;
  const double ca = std::cos(rad), sa = std::sin(rad);
  const double inv_scale = 1.0 / t.scale;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      // forward: p' = R * s * (p - c) + c + t, flip applied before the affine
      double dx = x - cx - t.translate_x;
      double dy = y - cy - t.translate_y;
      double sx = (ca * dx + sa * dy) * inv_scale;
      double sy = (-sa * dx + ca * dy) * inv_scale;
      double ux = sx + cx;
      double uy = sy + cy;
      if (t.hflip) ux = image.width - 1 - ux;
      const int ix = static_cast<int>(std::lround(ux));
      const int iy = static_cast<int>(std::lround(uy));
      if (!image.in_bounds(ix, iy)) continue;
      for (int c = 0; c < image.channels; ++c) out.image.at(x, y, c) = image.at(ix, iy, c);
      out.mask.at(x, y) = mask.at(ix, iy);
    }
  }
  return out;
}

std::uint8_t clamp8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

void photometric_colour_jitter(ImageU8& image, std::mt19937_64& rng) {
  double gain[3], offset[3];
  for (int c = 0; c < 3; ++c) {
    gain[c] = uniform_range(rng, 0.8, 1.2);
    offset[c] = uniform_range(rng, -20.0, 20.0);
  }
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < image.channels; ++c)
        image.at(x, y, c) = clamp8(image.at(x, y, c) * gain[c % 3] + offset[c % 3]);
}

void photometric_grayscale(ImageU8& image, std::mt19937_64&) {
  if (image.channels < 3) return;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const int avg = (image.at(x, y, 0) + image.at(x, y, 1) + image.at(x, y, 2)) / 3;
      for (int c = 0; c < image.channels; ++c) image.at(x, y, c) = static_cast<std::uint8_t>(avg);
    }
  }
}

void photometric_box_blur(ImageU8& image, std::mt19937_64&) {
  const ImageU8 src = image;
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        int sum = 0, count = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int xx = x + dx, yy = y + dy;
            if (!src.in_bounds(xx, yy)) continue;
            sum += src.at(xx, yy, c);
            ++count;
          }
        }
        image.at(x, y, c) = static_cast<std::uint8_t>(sum / count);
      }
    }
  }
}

void photometric_contrast(ImageU8& image, std::mt19937_64& rng) {
  const double f = uniform_range(rng, 0.7, 1.3);
  for (std::uint8_t& v : image.data) v = clamp8((v - 128.0) * f + 128.0);
}

void photometric_salt_pepper(ImageU8& image, std::mt19937_64& rng) {
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const double u = uniform01(rng);
      if (u >= 0.01) continue;
      const std::uint8_t v = u < 0.005 ? 0 : 255;
      for (int c = 0; c < image.channels; ++c) image.at(x, y, c) = v;
    }
  }
}

void photometric_gaussian_noise(ImageU8& image, std::mt19937_64& rng) {
  const double sigma = uniform_range(rng, 2.0, 10.0);
  for (std::uint8_t& v : image.data) v = clamp8(v + sigma * gaussian(rng));
}

void photometric_channel_dropout(ImageU8& image, std::mt19937_64& rng) {
  const int channel = uniform_int(rng, 0, image.channels - 1);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) image.at(x, y, channel) = 0;
}

}  // namespace

CmmBatch cmm_compose(const std::vector<ImageU8>& images, const std::vector<ImageF>& masks,
                     const CmmConfig& cfg, const std::vector<bool>& visibility,
                     const std::vector<int>* permutation) {
  cfg.validate();
  const std::size_t n = images.size();
  if (static_cast<int>(n) != cfg.batch_size)
    throw std::runtime_error("cmm_compose: image count does not match the configured batch size");
  if (masks.size() != n || visibility.size() != n)
    throw std::runtime_error("cmm_compose: images, masks, and visibility flags must align");
  for (std::size_t i = 0; i < n; ++i) {
    if (masks[i].width != images[i].width || masks[i].height != images[i].height)
      throw std::runtime_error("cmm_compose: mask/image size mismatch at item " + std::to_string(i));
    if (images[i].width != images[0].width || images[i].height != images[0].height ||
        images[i].channels != images[0].channels)
      throw std::runtime_error("cmm_compose: batch items must share one resolution");
    for (double v : masks[i].data)
      if (v != 0.0 && v != 1.0)
        throw std::runtime_error("cmm_compose: masks must be binary");
  }

  std::mt19937_64 rng(cfg.seed);

  std::vector<int> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<int>(i);
  if (permutation) {
    std::vector<int> check = *permutation;
    std::sort(check.begin(), check.end());
    for (std::size_t i = 0; i < n; ++i)
      if (check.size() != n || check[i] != static_cast<int>(i))
        throw std::runtime_error("cmm_compose: override is not a permutation of the batch");
    perm = *permutation;
  } else {
    for (std::size_t i = n - 1; i > 0; --i)
      std::swap(perm[i], perm[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(i)))]);
  }

  // Per-item geometric transforms, drawn in item order. The affine is gated
  // on the item's own full visibility; the flip is always eligible.
  std::vector<CmmTransformLog> logs(n);
  std::vector<TransformedItem> transformed(n);
  for (std::size_t i = 0; i < n; ++i) {
    CmmTransformLog& log = logs[i];
    log.hflip = uniform01(rng) < cfg.hflip_probability;
    const bool affine_drawn = uniform01(rng) < cfg.affine_probability;
    if (affine_drawn && visibility[i]) {
      log.affine = true;
      log.scale = uniform_range(rng, cfg.scale_min, cfg.scale_max);
      log.rotation_deg = uniform_range(rng, -cfg.rotation_max_deg, cfg.rotation_max_deg);
      log.translate_x = uniform_range(rng, -1.0, 1.0) * cfg.translation_max_fraction * images[i].width;
      log.translate_y = uniform_range(rng, -1.0, 1.0) * cfg.translation_max_fraction * images[i].height;
    }
    if (!log.hflip && !log.affine) {
      transformed[i] = {images[i], masks[i]};  // bit-exact identity path
    } else {
      transformed[i] = apply_geometric(images[i], masks[i], log);
    }
  }

  CmmBatch batch;
  batch.items.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = static_cast<std::size_t>(perm[i]);
    CmmItem& item = batch.items[i];
    item.host_index = static_cast<int>(i);
    item.donor_index = static_cast<int>(j);
    item.host_transform = logs[i];
    item.donor_transform = logs[j];

    const ImageU8& host = transformed[i].image;
    const ImageU8& donor = transformed[j].image;
    const ImageF& donor_mask = transformed[j].mask;
    item.pre_photometric = host;
    for (int y = 0; y < host.height; ++y)
      for (int x = 0; x < host.width; ++x)
        if (donor_mask.at(x, y) == 1.0)
          for (int c = 0; c < host.channels; ++c)
            item.pre_photometric.at(x, y, c) = donor.at(x, y, c);

    item.mask = donor_mask;
    if (cfg.union_host_mask)
      for (std::size_t p = 0; p < item.mask.data.size(); ++p)
        item.mask.data[p] = std::max(item.mask.data[p], transformed[i].mask.data[p]);

    item.image = item.pre_photometric;
    struct Effect {
      const char* name;
      void (*apply)(ImageU8&, std::mt19937_64&);
    };
    static constexpr Effect kEffects[] = {
        {"colour_jitter", photometric_colour_jitter}, {"grayscale", photometric_grayscale},
        {"box_blur", photometric_box_blur},           {"contrast", photometric_contrast},
        {"salt_and_pepper", photometric_salt_pepper}, {"gaussian_noise", photometric_gaussian_noise},
        {"channel_dropout", photometric_channel_dropout}};
    for (const Effect& effect : kEffects) {
      if (uniform01(rng) < cfg.photometric_probability) {
        effect.apply(item.image, rng);
        item.photometric.emplace_back(effect.name);
      }
    }
  }
  return batch;
}

void save_cmm_provenance_jsonl(const CmmBatch& batch, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot write");
  for (const CmmItem& item : batch.items) {
    nlohmann::json row;
    row["host"] = item.host_index;
    row["donor"] = item.donor_index;
    const auto log_json = [](const CmmTransformLog& log) {
      nlohmann::json j;
      j["hflip"] = log.hflip;
      j["affine"] = log.affine;
      if (log.affine) {
        j["scale"] = log.scale;
        j["rotation_deg"] = log.rotation_deg;
        j["translate_x"] = log.translate_x;
        j["translate_y"] = log.translate_y;
      }
      return j;
    };
    row["host_transform"] = log_json(item.host_transform);
    row["donor_transform"] = log_json(item.donor_transform);
    row["photometric"] = item.photometric;
    out << row.dump() << "\n";
  }
}

void save_cmm_batch(const CmmBatch& batch, const std::string& directory, const std::string& prefix) {
  for (std::size_t i = 0; i < batch.items.size(); ++i) {
    const std::string stem = directory + "/" + prefix + std::to_string(i);
    save_png(batch.items[i].image, stem + "_image.png");
    save_mask_png(batch.items[i].mask, stem + "_mask.png");
  }
  save_cmm_provenance_jsonl(batch, directory + "/" + prefix + "provenance.jsonl");
}

}  // namespace stereosil
