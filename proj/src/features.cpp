#include "her2/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>

#include "her2/error.hpp"

namespace her2 {

std::string_view descriptor_name(DescriptorId id) noexcept {
  switch (id) {
    case DescriptorId::kHsvHist: return "HSV";
    case DescriptorId::kHsvMs: return "HSV_MS";
    case DescriptorId::kHsvRgb: return "HSV_RGB";
    case DescriptorId::kLbp: return "LBP";
    case DescriptorId::kPftas: return "PFTAS";
  }
  return "?";
}

DescriptorId parse_descriptor(std::string_view name) {
  if (name == "HSV" || name == "HSV_HIST") return DescriptorId::kHsvHist;
  if (name == "HSV_MS") return DescriptorId::kHsvMs;
  if (name == "HSV_RGB") return DescriptorId::kHsvRgb;
  if (name == "LBP") return DescriptorId::kLbp;
  if (name == "PFTAS") return DescriptorId::kPftas;
  throw InputError("unknown descriptor '" + std::string(name) + "'");
}

void HistogramConfig::validate() const {
  if (bins_per_channel < 2) throw InputError("bins_per_channel must be at least 2");
}

void LbpParams::validate() const {
  if (radius != 1 || neighbors != 8) {
    throw InputError("only radius 1 with 8 neighbours is supported");
  }
}

std::size_t descriptor_dim(DescriptorId id, const HistogramConfig& cfg) {
  const auto bins = static_cast<std::size_t>(cfg.bins_per_channel);
  switch (id) {
    case DescriptorId::kHsvHist: return 3 * bins;
    case DescriptorId::kHsvMs: return 3 * bins + 6;
    case DescriptorId::kHsvRgb: return 6 * bins;
    case DescriptorId::kLbp: return kLbpBins;
    case DescriptorId::kPftas: return kPftasDim;
  }
  return 0;
}

namespace {

void normalize_blocks(std::vector<double>& hist, std::size_t block, double total) {
  if (total <= 0.0) return;
  for (std::size_t start = 0; start < hist.size(); start += block) {
    for (std::size_t i = start; i < start + block; ++i) hist[i] /= total;
  }
}

std::size_t unit_bin(double v, int bins) {
  const auto b = static_cast<long>(std::floor(v * bins));
  return static_cast<std::size_t>(std::clamp(b, 0L, static_cast<long>(bins - 1)));
}

}  // namespace

FeatureVector rgb_histogram(const RasterImage& patch, const HistogramConfig& cfg) {
  cfg.validate();
  const auto bins = static_cast<std::size_t>(cfg.bins_per_channel);
  std::vector<double> hist(3 * bins, 0.0);
  const std::size_t n = patch.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const Rgb c = patch.pixel(i);
    hist[c.r * bins / 256] += 1.0;
    hist[bins + c.g * bins / 256] += 1.0;
    hist[2 * bins + c.b * bins / 256] += 1.0;
  }
  if (cfg.normalize) normalize_blocks(hist, bins, static_cast<double>(n));
  return {DescriptorId::kHsvHist, std::move(hist)};
}

FeatureVector hsv_histogram(const RasterImage& patch, const HistogramConfig& cfg) {
  cfg.validate();
  const int bins = cfg.bins_per_channel;
  const auto b = static_cast<std::size_t>(bins);
  std::vector<double> hist(3 * b, 0.0);
  const std::size_t n = patch.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    const Hsv p = rgb_to_hsv(patch.pixel(i));
    hist[unit_bin(p.h / 360.0, bins)] += 1.0;
    hist[b + unit_bin(p.s, bins)] += 1.0;
    hist[2 * b + unit_bin(p.v, bins)] += 1.0;
  }
  if (cfg.normalize) normalize_blocks(hist, b, static_cast<double>(n));
  return {DescriptorId::kHsvHist, std::move(hist)};
}

// Two passes over values shifted by the first pixel, so a constant patch
// yields exactly zero spread.
std::array<double, 6> channel_mean_std(const RasterImage& patch) {
  if (patch.empty()) throw DataError("empty patch");
  const std::vector<Hsv> hsv = rgb_to_hsv(patch);
  const double n = static_cast<double>(hsv.size());
  auto channels = [](const Hsv& p) { return std::array<double, 3>{p.h / 360.0, p.s, p.v}; };
  const std::array<double, 3> origin = channels(hsv.front());
  std::array<double, 3> shift{};
  for (const Hsv& p : hsv) {
    const auto c = channels(p);
    for (std::size_t k = 0; k < 3; ++k) shift[k] += c[k] - origin[k];
  }
  for (double& m : shift) m /= n;
  std::array<double, 3> var{};
  for (const Hsv& p : hsv) {
    const auto c = channels(p);
    for (std::size_t k = 0; k < 3; ++k) {
      const double d = c[k] - origin[k] - shift[k];
      var[k] += d * d;
    }
  }
  std::array<double, 6> out{};
  for (std::size_t k = 0; k < 3; ++k) {
    out[2 * k] = origin[k] + shift[k];
    out[2 * k + 1] = std::sqrt(var[k] / n);
  }
  return out;
}

FeatureVector descriptor_hsv_ms(const RasterImage& patch, const HistogramConfig& cfg) {
  FeatureVector out = hsv_histogram(patch, cfg);
  const auto ms = channel_mean_std(patch);
  out.values.insert(out.values.end(), ms.begin(), ms.end());
  out.descriptor = DescriptorId::kHsvMs;
  return out;
}

FeatureVector descriptor_hsv_rgb(const RasterImage& patch, const HistogramConfig& cfg) {
  FeatureVector out = hsv_histogram(patch, cfg);
  const FeatureVector rgb = rgb_histogram(patch, cfg);
  out.values.insert(out.values.end(), rgb.values.begin(), rgb.values.end());
  out.descriptor = DescriptorId::kHsvRgb;
  return out;
}

// ---------------------------------------------------------------------------
// LBP

namespace {

// Fractional offset inside an interpolation cell: none, s = sqrt(2)/2, or 1 - s.
enum class Frac { kZero, kS, kOneMinusS };

struct Sample {
  int x0, y0;  // top-left integer offset of the interpolation cell
  Frac fx, fy;
};

// Neighbour k sits at angle k*45 degrees counter-clockwise from +x. Image
// rows grow downwards, so the row offset is -sin.
constexpr std::array<Sample, 8> kLbpSamples = {{
    {1, 0, Frac::kZero, Frac::kZero},         // 0 deg
    {0, -1, Frac::kS, Frac::kOneMinusS},      // 45
    {0, -1, Frac::kZero, Frac::kZero},        // 90
    {-1, -1, Frac::kOneMinusS, Frac::kOneMinusS},  // 135
    {-1, 0, Frac::kZero, Frac::kZero},        // 180
    {-1, 0, Frac::kOneMinusS, Frac::kS},      // 225
    {0, 1, Frac::kZero, Frac::kZero},         // 270
    {0, 0, Frac::kS, Frac::kS},               // 315
}};

// Sign test for P + Q*s >= 0 with s = 1/sqrt(2), exact for integers.
bool nonnegative(std::int64_t p, std::int64_t q) {
  if (p >= 0 && q >= 0) return true;
  if (p <= 0 && q <= 0) return p == 0 && q == 0;
  if (p > 0) return 2 * p * p >= q * q;  // q < 0
  return q * q >= 2 * p * p;             // p < 0 < q
}

// Bilinear interpolation of centre-relative values at a diagonal sample,
// compared against zero. With a = v01 - v00, b = v10 - v00 and
// d = v00 - v01 - v10 + v11 the interpolant v00 + fx*a + fy*b + fx*fy*d
// reduces (using s^2 = 1/2) to A + B*s with half-integer A and integer B.
bool diagonal_at_least_centre(const Sample& smp, std::int64_t v00, std::int64_t v01,
                              std::int64_t v10, std::int64_t v11) {
  const std::int64_t a = v01 - v00;
  const std::int64_t b = v10 - v00;
  const std::int64_t d = v00 - v01 - v10 + v11;
  std::int64_t twice_a, twice_b;  // 2A, 2B
  if (smp.fx == Frac::kS && smp.fy == Frac::kS) {
    twice_a = 2 * v00 + d;
    twice_b = 2 * (a + b);
  } else if (smp.fx == Frac::kS) {  // fy = 1 - s
    twice_a = 2 * (v00 + b) - d;
    twice_b = 2 * (a - b + d);
  } else if (smp.fy == Frac::kS) {  // fx = 1 - s
    twice_a = 2 * (v00 + a) - d;
    twice_b = 2 * (b - a + d);
  } else {
    twice_a = 2 * (v00 + a + b) + 3 * d;
    twice_b = -2 * (a + b) - 4 * d;
  }
  return nonnegative(twice_a, twice_b);
}

const std::array<std::uint8_t, 256>& uniform_table() {
  static const std::array<std::uint8_t, 256> table = [] {
    std::array<std::uint8_t, 256> t{};
    std::uint8_t next = 0;
    for (int code = 0; code < 256; ++code) {
      const auto c = static_cast<std::uint8_t>(code);
      const int transitions = std::popcount(static_cast<unsigned>(c ^ std::rotl(c, 1)));
      t[static_cast<std::size_t>(code)] = transitions <= 2 ? next++ : 58;
    }
    return t;
  }();
  return table;
}

}  // namespace

std::size_t lbp_uniform_bin(std::uint8_t code) noexcept { return uniform_table()[code]; }

std::uint8_t lbp_code(std::span<const int> gray, int width, int x, int y) {
  const int center = gray[static_cast<std::size_t>(y) * width + x];
  auto rel = [&](int xx, int yy) -> std::int64_t {
    return gray[static_cast<std::size_t>(yy) * width + xx] - center;
  };
  std::uint8_t code = 0;
  for (int k = 0; k < 8; ++k) {
    const Sample& s = kLbpSamples[static_cast<std::size_t>(k)];
    const int xa = x + s.x0;
    const int ya = y + s.y0;
    const bool set = s.fx == Frac::kZero
                         ? rel(xa, ya) >= 0
                         : diagonal_at_least_centre(s, rel(xa, ya), rel(xa + 1, ya),
                                                    rel(xa, ya + 1), rel(xa + 1, ya + 1));
    if (set) code = static_cast<std::uint8_t>(code | (1u << k));
  }
  return code;
}

FeatureVector lbp_descriptor(const RasterImage& patch, const LbpParams& params) {
  params.validate();
  const int w = patch.width();
  const int h = patch.height();
  if (w < 3 || h < 3) throw DataError("LBP needs at least a 3x3 patch");

  std::vector<int> gray(patch.pixel_count());
  for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = luma_level(patch.pixel(i));

  std::vector<double> hist(kLbpBins, 0.0);
  for (int y = 1; y < h - 1; ++y) {
    for (int x = 1; x < w - 1; ++x) hist[lbp_uniform_bin(lbp_code(gray, w, x, y))] += 1.0;
  }
  const double interior = static_cast<double>(w - 2) * static_cast<double>(h - 2);
  for (double& v : hist) v /= interior;
  return {DescriptorId::kLbp, std::move(hist)};
}

// ---------------------------------------------------------------------------
// PFTAS

int otsu_threshold(std::span<const std::uint8_t> values) {
  std::array<double, 256> hist{};
  for (std::uint8_t v : values) hist[v] += 1.0;
  double total = 0.0, total_sum = 0.0;
  for (int t = 0; t < 256; ++t) {
    total += hist[static_cast<std::size_t>(t)];
    total_sum += t * hist[static_cast<std::size_t>(t)];
  }
  double w0 = 0.0, s0 = 0.0, best = 0.0;
  int best_t = -1;
  for (int t = 0; t < 256; ++t) {
    w0 += hist[static_cast<std::size_t>(t)];
    s0 += t * hist[static_cast<std::size_t>(t)];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double d = s0 / w0 - (total_sum - s0) / w1;
    const double between = w0 * w1 * d * d;
    if (between > best) {
      best = between;
      best_t = t;
    }
  }
  if (best_t >= 0) return best_t;
  return values.empty() ? 0 : *std::max_element(values.begin(), values.end());
}

namespace {

// Appends the 9-bin neighbour-count histogram of the set pixels of `mask`.
void append_adjacency_block(const std::vector<std::uint8_t>& mask, int w, int h,
                            std::vector<double>& out) {
  std::array<double, 9> counts{};
  double set_pixels = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask[static_cast<std::size_t>(y) * w + x]) continue;
      int neighbours = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int xx = x + dx;
          const int yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          neighbours += mask[static_cast<std::size_t>(yy) * w + xx];
        }
      }
      counts[static_cast<std::size_t>(neighbours)] += 1.0;
      set_pixels += 1.0;
    }
  }
  for (double c : counts) out.push_back(set_pixels > 0.0 ? c / set_pixels : 0.0);
}

}  // namespace

FeatureVector pftas_descriptor(const RasterImage& patch) {
  const int w = patch.width();
  const int h = patch.height();
  const std::size_t n = patch.pixel_count();
  const auto& bytes = patch.bytes();

  std::vector<double> out;
  out.reserve(kPftasDim);
  std::vector<std::uint8_t> channel(n);
  std::vector<std::uint8_t> mask(n);
  for (int ch = 0; ch < 3; ++ch) {
    for (std::size_t i = 0; i < n; ++i) channel[i] = bytes[3 * i + static_cast<std::size_t>(ch)];
    const int threshold = otsu_threshold(channel);

    std::int64_t count = 0, sum = 0, sum_sq = 0;
    for (std::uint8_t p : channel) {
      if (p > threshold) {
        ++count;
        sum += p;
        sum_sq += static_cast<std::int64_t>(p) * p;
      }
    }
    double mu = threshold;
    double sigma = 0.0;
    if (count > 0) {
      mu = static_cast<double>(sum) / static_cast<double>(count);
      const double spread = static_cast<double>(count * sum_sq - sum * sum);
      sigma = std::sqrt(std::max(0.0, spread)) / static_cast<double>(count);
    }

    const double lo = mu - sigma;
    const double hi = mu + sigma;
    auto emit = [&](auto&& predicate) {
      for (std::size_t i = 0; i < n; ++i) mask[i] = predicate(static_cast<double>(channel[i])) ? 1 : 0;
      append_adjacency_block(mask, w, h, out);
      for (auto& m : mask) m ^= 1;
      append_adjacency_block(mask, w, h, out);
    };
    emit([&](double p) { return p >= lo && p <= hi; });
    emit([&](double p) { return p >= lo; });
    emit([&](double p) { return p >= mu; });
  }
  return {DescriptorId::kPftas, std::move(out)};
}

FeatureVector extract_descriptor(DescriptorId id, const RasterImage& patch,
                                 const HistogramConfig& cfg) {
  switch (id) {
    case DescriptorId::kHsvHist: return hsv_histogram(patch, cfg);
    case DescriptorId::kHsvMs: return descriptor_hsv_ms(patch, cfg);
    case DescriptorId::kHsvRgb: return descriptor_hsv_rgb(patch, cfg);
    case DescriptorId::kLbp: return lbp_descriptor(patch);
    case DescriptorId::kPftas: return pftas_descriptor(patch);
  }
  throw InvariantError("unhandled descriptor");
}

void write_feature_csv(std::ostream& out, std::span<const FeatureRow> rows) {
  out << "slide_id,origin_x,origin_y,label";
  const std::size_t dim = rows.empty() ? 0 : rows.front().values.size();
  for (std::size_t i = 0; i < dim; ++i) out << ",f" << i;
  out << '\n';
  char buf[32];
  for (const FeatureRow& row : rows) {
    out << row.slide_id << ',' << row.origin_x << ',' << row.origin_y << ',' << row.label;
    for (double v : row.values) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace her2
