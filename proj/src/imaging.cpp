#include "her2/imaging.hpp"

#include <algorithm>
#include <cmath>

#include "her2/error.hpp"
#include "her2/parallel.hpp"

namespace her2 {

RasterImage::RasterImage(int width, int height, Rgb fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw InputError("image dimensions must be positive");
  pixels_.resize(pixel_count() * 3);
  for (std::size_t i = 0; i < pixels_.size(); i += 3) {
    pixels_[i] = fill.r;
    pixels_[i + 1] = fill.g;
    pixels_[i + 2] = fill.b;
  }
}

RasterImage::RasterImage(int width, int height, std::vector<std::uint8_t> pixels)
    : width_(width), height_(height), pixels_(std::move(pixels)) {
  if (width <= 0 || height <= 0) throw InputError("image dimensions must be positive");
  if (pixels_.size() != pixel_count() * 3) {
    throw InputError("pixel buffer length does not match width * height * 3");
  }
}

RasterImage RasterImage::crop(int x0, int y0, int w, int h) const {
  if (x0 < 0 || y0 < 0 || w <= 0 || h <= 0 || x0 + w > width_ || y0 + h > height_) {
    throw InputError("crop rectangle outside image");
  }
  std::vector<std::uint8_t> out(static_cast<std::size_t>(w) * h * 3);
  const std::size_t row_bytes = static_cast<std::size_t>(w) * 3;
  for (int y = 0; y < h; ++y) {
    const auto src = pixels_.begin() + static_cast<std::ptrdiff_t>(index(x0, y0 + y));
    std::copy(src, src + static_cast<std::ptrdiff_t>(row_bytes),
              out.begin() + static_cast<std::ptrdiff_t>(y * row_bytes));
  }
  return RasterImage(w, h, std::move(out));
}

void TissueFilterConfig::validate() const {
  if (!(background_luma_threshold >= 0.0 && background_luma_threshold <= 255.0)) {
    throw InputError("background_luma_threshold must be in [0, 255]");
  }
  if (!(max_background_fraction >= 0.0 && max_background_fraction <= 1.0)) {
    throw InputError("max_background_fraction must be in [0, 1]");
  }
  if (!(min_luma_stddev >= 0.0 && min_luma_stddev <= 255.0)) {
    throw InputError("min_luma_stddev must be in [0, 255]");
  }
}

Hsv rgb_to_hsv(Rgb c) noexcept {
  const double r = c.r / 255.0;
  const double g = c.g / 255.0;
  const double b = c.b / 255.0;
  const double hi = std::max({r, g, b});
  const double lo = std::min({r, g, b});
  const double delta = hi - lo;

  Hsv out;
  out.v = hi;
  out.s = hi > 0.0 ? delta / hi : 0.0;
  if (delta <= 0.0) return out;  // gray: hue fixed to 0

  double h;
  if (c.r >= c.g && c.r >= c.b) {
    h = (g - b) / delta;
  } else if (c.g >= c.b) {
    h = (b - r) / delta + 2.0;
  } else {
    h = (r - g) / delta + 4.0;
  }
  h *= 60.0;
  if (h < 0.0) h += 360.0;
  if (h >= 360.0) h -= 360.0;
  out.h = h;
  return out;
}

Rgb hsv_to_rgb(const Hsv& hsv) noexcept {
  const double c = hsv.v * hsv.s;
  const double hp = std::fmod(hsv.h, 360.0) / 60.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c; g = x; break;
    case 1: r = x; g = c; break;
    case 2: g = c; b = x; break;
    case 3: g = x; b = c; break;
    case 4: r = x; b = c; break;
    default: r = c; b = x; break;
  }
  const double m = hsv.v - c;
  auto to8 = [](double v) {
    return static_cast<std::uint8_t>(std::clamp(std::lround(v * 255.0), 0L, 255L));
  };
  return {to8(r + m), to8(g + m), to8(b + m)};
}

std::vector<Hsv> rgb_to_hsv(const RasterImage& image) {
  std::vector<Hsv> out(image.pixel_count());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = rgb_to_hsv(image.pixel(i));
  return out;
}

std::vector<RasterPatch> tile_image(const RasterImage& image, int tile_size,
                                    const std::string& slide_id, int threads) {
  if (image.empty()) throw InputError("cannot tile an empty image");
  if (tile_size < 1) throw InputError("tile size must be at least 1");

  const int cols = image.width() / tile_size;
  const int rows = image.height() / tile_size;
  std::vector<RasterPatch> tiles(static_cast<std::size_t>(cols) * static_cast<std::size_t>(rows));
  parallel_for(tiles.size(), threads, [&](std::size_t i) {
    const int x = static_cast<int>(i % static_cast<std::size_t>(cols)) * tile_size;
    const int y = static_cast<int>(i / static_cast<std::size_t>(cols)) * tile_size;
    tiles[i] = RasterPatch{slide_id, x, y, image.crop(x, y, tile_size, tile_size)};
  });
  return tiles;
}

TissueStats tissue_stats(const RasterImage& image, double background_luma_threshold) {
  const std::size_t n = image.pixel_count();
  std::size_t background = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double y = luma(image.pixel(i));
    if (y >= background_luma_threshold) ++background;
    sum += y;
  }
  const double mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = luma(image.pixel(i)) - mean;
    sq += d * d;
  }
  return {static_cast<double>(background) / static_cast<double>(n),
          std::sqrt(sq / static_cast<double>(n))};
}

bool tissue_filter(const RasterPatch& patch, const TissueFilterConfig& cfg) {
  const TissueStats s = tissue_stats(patch.data, cfg.background_luma_threshold);
  return s.background_fraction <= cfg.max_background_fraction &&
         s.luma_stddev >= cfg.min_luma_stddev;
}

std::string patch_file_name(const RasterPatch& patch) {
  return patch.slide_id + "_x" + std::to_string(patch.origin_x) + "_y" +
         std::to_string(patch.origin_y) + ".png";
}

}  // namespace her2
