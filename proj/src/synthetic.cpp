#include "her2/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "her2/error.hpp"
#include "her2/random.hpp"

namespace her2 {

SyntheticCohortSpec SyntheticCohortSpec::defaults(ClassMode mode) {
  SyntheticCohortSpec spec;
  spec.class_mode = mode;
  if (mode == ClassMode::kFourClass) {
    spec.stains = {{0.05, 0.30}, {0.22, 0.60}, {0.45, 0.90}};
  } else {
    spec.stains = {{0.02, 0.25}, {0.09, 0.40}, {0.22, 0.60}, {0.45, 0.90}};
  }
  return spec;
}

void SyntheticCohortSpec::validate() const {
  const LabelSpace labels(class_mode);
  if (cases_per_score < 1 || patches_per_slide < 1 || patch_size < 3) {
    throw InputError("synthetic cohort counts must be positive");
  }
  if (curated_per_slide < 0 || curated_per_slide > patches_per_slide) {
    throw InputError("curated_per_slide must be in [0, patches_per_slide]");
  }
  if (noise_rate < 0.0 || noise_rate > 1.0 || heterogeneity < 0.0 || heterogeneity > 1.0) {
    throw InputError("synthetic rates must lie in [0, 1]");
  }
  if (stains.size() != static_cast<std::size_t>(labels.score_count())) {
    throw InputError("need one stain model per non-noise class");
  }
  for (const StainModel& s : stains) {
    if (s.brown_fraction < 0.0 || s.brown_fraction > 1.0 || s.intensity < 0.0 ||
        s.intensity > 1.0) {
      throw InputError("stain fractions and intensities must lie in [0, 1]");
    }
  }
}

namespace {

constexpr double kWhite[3] = {240.0, 236.0, 238.0};
constexpr double kBrown[3] = {140.0, 80.0, 20.0};
constexpr double kCounterstain[3] = {165.0, 160.0, 200.0};

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

// Symmetric triangular noise in [-amplitude, amplitude] from 16 random bits.
double triangular(std::uint64_t bits, double amplitude) {
  const double a = static_cast<double>(bits & 0xff);
  const double b = static_cast<double>((bits >> 8) & 0xff);
  return (a + b - 255.0) / 255.0 * amplitude;
}

RasterImage stained_patch(int size, const StainModel& stain, Rng& rng) {
  const double fraction = std::clamp(stain.brown_fraction + rng.normal(0.0, 0.02), 0.0, 1.0);
  const double intensity = std::clamp(stain.intensity + rng.normal(0.0, 0.04), 0.0, 1.0);
  double brown[3];
  for (int c = 0; c < 3; ++c) brown[c] = kWhite[c] + (kBrown[c] - kWhite[c]) * intensity;
  const auto threshold = static_cast<std::uint64_t>(fraction * 32768.0);

  RasterImage img(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const std::uint64_t r = rng.next();
      const std::uint64_t pick = r & 0x7fff;
      const double* base;
      double amp;
      if (pick < threshold) {
        base = brown;
        amp = 10.0;
      } else if ((r >> 15) & 1) {
        base = kCounterstain;
        amp = 14.0;
      } else {
        base = kWhite;
        amp = 8.0;
      }
      img.set(x, y,
              {to_byte(base[0] + triangular(r >> 16, amp)),
               to_byte(base[1] + triangular(r >> 32, amp)),
               to_byte(base[2] + triangular(r >> 48, amp))});
    }
  }
  return img;
}

// Blank glass or an out-of-focus smear.
RasterImage noise_patch(int size, Rng& rng) {
  RasterImage img(size, size);
  if (rng.bernoulli(0.5)) {
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const std::uint64_t r = rng.next();
        img.set(x, y, {to_byte(246.0 + triangular(r, 4.0)), to_byte(245.0 + triangular(r >> 16, 4.0)),
                       to_byte(247.0 + triangular(r >> 32, 4.0))});
      }
    }
    return img;
  }
  const double phase = rng.uniform(0.0, 6.283185307179586);
  const double period = rng.uniform(30.0, 80.0);
  const double level = rng.uniform(90.0, 170.0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double wave = 40.0 * std::sin((x + 0.5 * y) / period + phase);
      const std::uint64_t r = rng.next();
      const double g = level + wave;
      img.set(x, y, {to_byte(g + 6.0 + triangular(r, 3.0)), to_byte(g + triangular(r >> 16, 3.0)),
                     to_byte(g + 10.0 + triangular(r >> 32, 3.0))});
    }
  }
  return img;
}

}  // namespace

std::vector<SyntheticCase> generate_synthetic_cohort(const SyntheticCohortSpec& spec) {
  spec.validate();
  const LabelSpace labels(spec.class_mode);
  const int scores = labels.score_count();
  Rng rng(spec.seed);

  std::vector<SyntheticCase> cohort;
  int patient = 0;
  for (int score = 0; score < scores; ++score) {
    for (int n = 0; n < spec.cases_per_score; ++n, ++patient) {
      char id[16];
      std::snprintf(id, sizeof id, "P%03d", patient);
      SyntheticCase sc;
      sc.record.patient_id = id;
      sc.record.slide_id = std::string(id) + "_S0";
      sc.record.ground_truth = score;

      const int tile = spec.patch_size;
      const int per_row = 8;
      for (int p = 0; p < spec.patches_per_slide; ++p) {
        int cls;
        if (rng.bernoulli(spec.noise_rate)) {
          cls = labels.noise();
        } else if (rng.bernoulli(spec.heterogeneity)) {
          std::vector<int> neighbours;
          if (score > 0) neighbours.push_back(score - 1);
          if (score + 1 < scores) neighbours.push_back(score + 1);
          cls = neighbours[rng.below(neighbours.size())];
        } else {
          cls = score;
        }
        RasterImage img = cls == labels.noise()
                              ? noise_patch(tile, rng)
                              : stained_patch(tile, spec.stains[static_cast<std::size_t>(cls)], rng);
        sc.record.patches.push_back(
            {sc.record.slide_id, (p % per_row) * tile, (p / per_row) * tile, std::move(img)});
        sc.patch_truth.push_back(cls);
      }

      std::vector<std::size_t> order(sc.record.patches.size());
      std::iota(order.begin(), order.end(), 0);
      rng.shuffle(std::span(order));
      order.resize(static_cast<std::size_t>(spec.curated_per_slide));
      std::sort(order.begin(), order.end());
      for (std::size_t i : order) {
        sc.record.curated.push_back({sc.record.patches[i], sc.patch_truth[i]});
      }
      cohort.push_back(std::move(sc));
    }
  }
  return cohort;
}

std::vector<CaseRecord> cohort_records(std::vector<SyntheticCase> cohort) {
  std::vector<CaseRecord> out;
  out.reserve(cohort.size());
  for (auto& c : cohort) out.push_back(std::move(c.record));
  return out;
}

double brown_pixel_fraction(const RasterImage& patch) {
  std::size_t brown = 0;
  for (std::size_t i = 0; i < patch.pixel_count(); ++i) {
    const Rgb c = patch.pixel(i);
    if (static_cast<int>(c.r) - static_cast<int>(c.b) > 25) ++brown;
  }
  return static_cast<double>(brown) / static_cast<double>(patch.pixel_count());
}

}  // namespace her2
