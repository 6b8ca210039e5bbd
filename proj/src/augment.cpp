#include "epe/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "epe/segnet.hpp"

namespace epe {

namespace {

std::size_t scaled_extent(std::size_t extent, double scale) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(extent) * scale)));
}

long long draw_offset(Rng& rng, std::size_t canvas, std::size_t crop) {
  if (canvas >= crop) return static_cast<long long>(rng.below(canvas - crop + 1));
  return -static_cast<long long>(rng.below(crop - canvas + 1));
}

}  // namespace

AugmentParams draw_augment_params(const AugmentConfig& config, Rng& rng, std::size_t height, std::size_t width) {
  AugmentParams p;
  p.flip = rng.uniform() < config.flip_prob;
  p.scale = rng.uniform(config.scale_min, config.scale_max);
  p.angle_deg = rng.uniform(-config.max_rotation_deg, config.max_rotation_deg);
  p.crop_y = draw_offset(rng, scaled_extent(height, p.scale), config.crop_size);
  p.crop_x = draw_offset(rng, scaled_extent(width, p.scale), config.crop_size);
  return p;
}

SegSample apply_augment(const SegSample& sample, const AugmentParams& params, std::size_t crop_h, std::size_t crop_w) {
  const std::size_t height = sample.image.dim(2), width = sample.image.dim(3), plane = height * width;
  const std::size_t canvas_h = scaled_extent(height, params.scale), canvas_w = scaled_extent(width, params.scale);
  const double theta = params.angle_deg * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);

  double mean[3];
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += sample.image[c * plane + i];
    mean[c] = s / static_cast<double>(plane);
  }

  SegSample out;
  out.id = sample.id;
  out.image = Tensor<float>({1, 3, crop_h, crop_w});
  out.label = LabelMap{crop_h, crop_w, std::vector<std::uint8_t>(crop_h * crop_w, kIgnoreLabel)};
  const std::size_t out_plane = crop_h * crop_w;

  for (std::size_t y = 0; y < crop_h; ++y) {
    for (std::size_t x = 0; x < crop_w; ++x) {
      const std::size_t o = y * crop_w + x;
      const long long cy = static_cast<long long>(y) + params.crop_y;
      const long long cx = static_cast<long long>(x) + params.crop_x;
      double sy = -1e9, sx = -1e9;
      if (cy >= 0 && cx >= 0 && cy < static_cast<long long>(canvas_h) && cx < static_cast<long long>(canvas_w)) {
        // Canvas pixel center relative to the canvas center, rotated back and unscaled.
        const double py = static_cast<double>(cy) + 0.5 - static_cast<double>(canvas_h) / 2.0;
        const double px = static_cast<double>(cx) + 0.5 - static_cast<double>(canvas_w) / 2.0;
        const double rx = cos_t * px + sin_t * py;
        const double ry = -sin_t * px + cos_t * py;
        sy = ry / params.scale + static_cast<double>(height) / 2.0 - 0.5;
        sx = rx / params.scale + static_cast<double>(width) / 2.0 - 0.5;
        if (params.flip) sx = static_cast<double>(width) - 1.0 - sx;
      }
      const double ny = std::floor(sy + 0.5), nx = std::floor(sx + 0.5);
      const bool inside = ny >= 0 && nx >= 0 && ny < static_cast<double>(height) && nx < static_cast<double>(width);
      if (!inside) {
        for (std::size_t c = 0; c < 3; ++c) out.image[c * out_plane + o] = static_cast<float>(mean[c]);
        continue;
      }
      out.label.values[o] = sample.label.at(static_cast<std::size_t>(ny), static_cast<std::size_t>(nx));

      const double fy0 = std::floor(sy), fx0 = std::floor(sx);
      const double fy = sy - fy0, fx = sx - fx0;
      const auto clamp_index = [](double v, std::size_t extent) {
        return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(extent - 1)));
      };
      const std::size_t y0 = clamp_index(fy0, height), y1 = clamp_index(fy0 + 1, height);
      const std::size_t x0 = clamp_index(fx0, width), x1 = clamp_index(fx0 + 1, width);
      for (std::size_t c = 0; c < 3; ++c) {
        const float* src = sample.image.data() + c * plane;
        const double top = (1.0 - fx) * src[y0 * width + x0] + fx * src[y0 * width + x1];
        const double bottom = (1.0 - fx) * src[y1 * width + x0] + fx * src[y1 * width + x1];
        out.image[c * out_plane + o] = static_cast<float>((1.0 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

SegSample augment(const SegSample& sample, const AugmentConfig& config, Rng& rng) {
  const AugmentParams params = draw_augment_params(config, rng, sample.image.dim(2), sample.image.dim(3));
  return apply_augment(sample, params, config.crop_size, config.crop_size);
}

}  // namespace epe
