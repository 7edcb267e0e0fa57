#pragma once

#include <cstdint>
#include <vector>

#include "her2/pipeline.hpp"

namespace her2 {

/// Brown (DAB) membrane staining of one patch class.
struct StainModel {
  double brown_fraction = 0.0;  // mean share of membrane pixels
  double intensity = 0.0;       // 0 = white, 1 = full brown
};

struct SyntheticCohortSpec {
  ClassMode class_mode = ClassMode::kFourClass;
  int cases_per_score = 10;
  int patches_per_slide = 40;
  int curated_per_slide = 10;
  int patch_size = kPatchSize;
  double noise_rate = 0.10;
  /// Share of non-noise patches drawn from a grade adjacent to the slide's.
  double heterogeneity = 0.15;
  std::vector<StainModel> stains;  // one per non-noise patch class
  std::uint64_t seed = 0;

  /// Stain models with fraction and intensity rising with the grade.
  static SyntheticCohortSpec defaults(ClassMode mode);
  void validate() const;
};

/// A generated slide together with the true class of every patch.
struct SyntheticCase {
  CaseRecord record;
  std::vector<int> patch_truth;
};

/// Deterministic under spec.seed. Patient ids are "P000", "P001", ...; each
/// patient has one slide. Curated patches are sampled (without replacement)
/// from the slide's own patches and carry their true class.
std::vector<SyntheticCase> generate_synthetic_cohort(const SyntheticCohortSpec& spec);

std::vector<CaseRecord> cohort_records(std::vector<SyntheticCase> cohort);

/// Share of pixels a patch generator marks as membrane, estimated from
/// color: red exceeding blue by more than 25 levels.
double brown_pixel_fraction(const RasterImage& patch);

}  // namespace her2
