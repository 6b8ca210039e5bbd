#pragma once

#include <cstddef>

#include "epe/dataset.hpp"
#include "epe/rng.hpp"

namespace epe {

struct AugmentConfig {
  double flip_prob = 0.5;
  double scale_min = 0.5;
  double scale_max = 2.0;
  double max_rotation_deg = 10.0;
  std::size_t crop_size = 128;
};

/// One concrete draw of the augmentation. The crop offset is in the coordinates of
/// the scaled canvas; a negative offset places the canvas inside a padded crop.
struct AugmentParams {
  bool flip = false;
  double scale = 1.0;
  double angle_deg = 0.0;
  long long crop_y = 0;
  long long crop_x = 0;
};

/// Draws, in order: flip, scale, rotation angle, crop row offset, crop column offset.
AugmentParams draw_augment_params(const AugmentConfig& config, Rng& rng, std::size_t height, std::size_t width);

/// Horizontal flip, scale and rotation about the canvas center (bilinear image,
/// nearest-neighbor label), then a crop of crop_h x crop_w. Pixels that fall outside
/// the source take the per-channel image mean and the ignore label.
SegSample apply_augment(const SegSample& sample, const AugmentParams& params, std::size_t crop_h, std::size_t crop_w);

SegSample augment(const SegSample& sample, const AugmentConfig& config, Rng& rng);

}  // namespace epe
