#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "her2/imaging.hpp"

namespace her2 {

enum class DescriptorId { kHsvHist, kHsvMs, kHsvRgb, kLbp, kPftas };

inline constexpr std::array<DescriptorId, 5> kAllDescriptors = {
    DescriptorId::kHsvHist, DescriptorId::kHsvMs, DescriptorId::kHsvRgb, DescriptorId::kLbp,
    DescriptorId::kPftas};

/// Table labels: HSV, HSV_MS, HSV_RGB, LBP, PFTAS.
std::string_view descriptor_name(DescriptorId id) noexcept;
/// Accepts the table labels (and HSV_HIST); throws InputError otherwise.
DescriptorId parse_descriptor(std::string_view name);

struct HistogramConfig {
  int bins_per_channel = 32;
  bool normalize = true;

  void validate() const;
};

/// Radius-1, 8-neighbour, non-rotation-invariant uniform LBP. The only
/// supported setting; validate() rejects anything else.
struct LbpParams {
  int radius = 1;
  int neighbors = 8;

  void validate() const;
};

inline constexpr std::size_t kLbpBins = 59;
inline constexpr std::size_t kPftasDim = 162;

struct FeatureVector {
  DescriptorId descriptor = DescriptorId::kHsvHist;
  std::vector<double> values;

  std::size_t dim() const noexcept { return values.size(); }
};

std::size_t descriptor_dim(DescriptorId id, const HistogramConfig& cfg);

FeatureVector rgb_histogram(const RasterImage& patch, const HistogramConfig& cfg);
FeatureVector hsv_histogram(const RasterImage& patch, const HistogramConfig& cfg);

/// (mean H, std H, mean S, std S, mean V, std V) with H divided by 360.
/// Standard deviations are population values.
std::array<double, 6> channel_mean_std(const RasterImage& patch);

FeatureVector descriptor_hsv_ms(const RasterImage& patch, const HistogramConfig& cfg);
FeatureVector descriptor_hsv_rgb(const RasterImage& patch, const HistogramConfig& cfg);

/// Throws DataError for images smaller than 3x3.
FeatureVector lbp_descriptor(const RasterImage& patch, const LbpParams& params = {});

/// Raw 8-bit LBP code of interior pixel (x, y) over the integer luma plane.
std::uint8_t lbp_code(std::span<const int> gray, int width, int x, int y);

/// Bin index in [0, 59) for an 8-bit code: uniform codes in ascending
/// code order take bins 0..57, everything else bin 58.
std::size_t lbp_uniform_bin(std::uint8_t code) noexcept;

/// Otsu threshold over an 8-bit sample. Pixels <= T form the lower class.
/// A single-level input returns that level.
int otsu_threshold(std::span<const std::uint8_t> values);

FeatureVector pftas_descriptor(const RasterImage& patch);

FeatureVector extract_descriptor(DescriptorId id, const RasterImage& patch,
                                 const HistogramConfig& cfg);

struct FeatureRow {
  std::string slide_id;
  int origin_x = 0;
  int origin_y = 0;
  std::string label;
  std::vector<double> values;
};

/// CSV with header `slide_id,origin_x,origin_y,label,f0,f1,...`.
void write_feature_csv(std::ostream& out, std::span<const FeatureRow> rows);

}  // namespace her2
