#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "her2/imaging.hpp"
#include "her2/pipeline.hpp"

namespace her2 {

struct ManifestCurated {
  std::string path;
  std::string label;
};

/// One slide row. Exactly one of slide_path / patch_dir is set; relative
/// paths resolve against the manifest's directory.
struct ManifestRow {
  std::string patient_id;
  std::string slide_id;
  std::string slide_path;
  std::string patch_dir;
  std::optional<std::string> ground_truth;
  std::vector<ManifestCurated> curated;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestRow> rows;
};

/// JSON document `{"cases": [{"patient_id", "slide_id", "slide_path" |
/// "patch_dir", "ground_truth"?, "curated"?: [{"path", "label"}]}]}`.
/// Throws InputError naming the row on schema violations.
Manifest parse_manifest(std::string_view text, std::filesystem::path base_dir = {});
Manifest load_manifest(const std::filesystem::path& path);

/// Throws InputError naming the first row without a ground truth.
void require_ground_truth(const Manifest& manifest);

struct TilingSummary {
  std::size_t tiles = 0;
  std::size_t kept = 0;
};

/// Tiles a slide image and keeps the tissue-bearing patches.
std::vector<RasterPatch> tile_and_filter(const RasterImage& slide, const std::string& slide_id,
                                         const TissueFilterConfig& tissue, int threads,
                                         TilingSummary* summary = nullptr);

/// Every supported image in `dir`, sorted by file name.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Loads imagery and labels for every row. Slide images are tiled and
/// tissue-filtered; patch directories are taken as already selected.
std::vector<CaseRecord> load_cases(const Manifest& manifest, const LabelSpace& labels,
                                   const TissueFilterConfig& tissue, int threads = 1);

}  // namespace her2
