#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stereosil/image.hpp"

namespace stereosil {

/// Copy-move-merge batch composition settings. Every item is independently
/// transformed (horizontal flip always eligible; the affine only when that
/// item's robot is fully visible), then each output composites a donor's
/// robot cut-out over a host image. Photometric effects hit the composited
/// image afterwards, each with its own probability.
struct CmmConfig {
  int batch_size = 2;
  double hflip_probability = 0.5;
  double affine_probability = 0.5;
  double scale_min = 1.0;  // the affine scale draw stays within [1.0, 1.8]
  double scale_max = 1.8;
  double rotation_max_deg = 15.0;         // affine rotation, +- range
  double translation_max_fraction = 0.1;  // affine shift, fraction of image size, +-
  double photometric_probability = 0.2;   // per photometric effect
  bool union_host_mask = false;  // extension: also keep the host's own robot in the emitted mask
  std::uint64_t seed = 0;

  void validate() const;
};

struct CmmTransformLog {
  bool hflip = false;
  bool affine = false;
  double scale = 1.0;
  double rotation_deg = 0;
  double translate_x = 0;  // px
  double translate_y = 0;  // px
};

struct CmmItem {
  ImageU8 image;            // final composited image, photometric applied
  ImageF mask;              // emitted ground truth: the transformed donor mask
  ImageU8 pre_photometric;  // composited image before photometric effects
  int host_index = -1;
  int donor_index = -1;
  CmmTransformLog host_transform;
  CmmTransformLog donor_transform;
  std::vector<std::string> photometric;  // effect names applied, in order
};

struct CmmBatch {
  std::vector<CmmItem> items;
};

/// Compose a batch: donors are a uniform permutation of the items (without
/// replacement), output i = (1 - M'_j) * I'_i + M'_j * I'_j with j = perm[i].
/// Geometric transforms use nearest-neighbour sampling and hit image and mask
/// identically, so wherever the emitted mask is 1 the pre-photometric pixel
/// equals the transformed donor pixel exactly. `permutation` overrides the
/// random draw for tests (must be a permutation of 0..B-1).
CmmBatch cmm_compose(const std::vector<ImageU8>& images, const std::vector<ImageF>& masks,
                     const CmmConfig& cfg, const std::vector<bool>& visibility,
                     const std::vector<int>* permutation = nullptr);

/// One JSON object per line: host, donor, both transform logs, photometric
/// effect names.
void save_cmm_provenance_jsonl(const CmmBatch& batch, const std::string& path);

/// PNG pairs {prefix}{i}_image.png / {prefix}{i}_mask.png plus
/// {prefix}provenance.jsonl in the directory.
void save_cmm_batch(const CmmBatch& batch, const std::string& directory,
                    const std::string& prefix = "cmm_");

}  // namespace stereosil
