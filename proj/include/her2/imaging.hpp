#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace her2 {

inline constexpr int kPatchSize = 250;

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Row-major interleaved 8-bit RGB image.
class RasterImage {
 public:
  RasterImage() = default;
  /// Throws InputError unless width, height > 0.
  RasterImage(int width, int height, Rgb fill = {});
  /// Throws InputError unless pixels.size() == width * height * 3.
  RasterImage(int width, int height, std::vector<std::uint8_t> pixels);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return pixels_.empty(); }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_);
  }

  Rgb at(int x, int y) const noexcept {
    const std::size_t i = index(x, y);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }
  void set(int x, int y, Rgb c) noexcept {
    const std::size_t i = index(x, y);
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
  }
  /// i-th pixel in row-major order.
  Rgb pixel(std::size_t i) const noexcept {
    return {pixels_[3 * i], pixels_[3 * i + 1], pixels_[3 * i + 2]};
  }

  const std::vector<std::uint8_t>& bytes() const noexcept { return pixels_; }

  /// Copy of the rectangle [x0, x0+w) x [y0, y0+h); must lie inside the image.
  RasterImage crop(int x0, int y0, int w, int h) const;

  friend bool operator==(const RasterImage&, const RasterImage&) = default;

 private:
  std::size_t index(int x, int y) const noexcept {
    return 3 * (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
                static_cast<std::size_t>(x));
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> pixels_;
};

struct RasterPatch {
  std::string slide_id;
  int origin_x = 0;
  int origin_y = 0;
  RasterImage data;
};

/// Histogram-based tissue selection thresholds.
struct TissueFilterConfig {
  double background_luma_threshold = 220.0;
  double max_background_fraction = 0.75;
  double min_luma_stddev = 8.0;

  /// Throws InputError when a threshold is outside its range.
  void validate() const;
};

struct Hsv {
  double h = 0.0;  // degrees in [0, 360)
  double s = 0.0;  // [0, 1]
  double v = 0.0;  // [0, 1]
};

/// Luma with the 0.299/0.587/0.114 weights.
inline double luma(Rgb c) noexcept { return 0.299 * c.r + 0.587 * c.g + 0.114 * c.b; }

/// Luma rounded to the nearest integer level in exact integer arithmetic.
/// Weights sum to 1000, so adding k to every channel adds exactly k.
inline int luma_level(Rgb c) noexcept { return (299 * c.r + 587 * c.g + 114 * c.b + 500) / 1000; }

Hsv rgb_to_hsv(Rgb c) noexcept;
Rgb hsv_to_rgb(const Hsv& hsv) noexcept;

/// Per-pixel conversion of a patch, row-major.
std::vector<Hsv> rgb_to_hsv(const RasterImage& image);

/// Non-overlapping row-major grid of tile_size x tile_size tiles; partial
/// border tiles are dropped. Throws InputError for an empty image or
/// tile_size < 1.
std::vector<RasterPatch> tile_image(const RasterImage& image, int tile_size,
                                    const std::string& slide_id = {}, int threads = 1);

struct TissueStats {
  double background_fraction = 0.0;
  double luma_stddev = 0.0;
};

TissueStats tissue_stats(const RasterImage& image, double background_luma_threshold);

/// True when the patch carries enough tissue to be kept.
bool tissue_filter(const RasterPatch& patch, const TissueFilterConfig& cfg);

/// `<slide_id>_x<origin_x>_y<origin_y>.png`
std::string patch_file_name(const RasterPatch& patch);

}  // namespace her2
