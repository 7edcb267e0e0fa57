#include "her2/manifest.hpp"

#include <algorithm>
#include <regex>

#include "json.hpp"

#include "her2/error.hpp"
#include "her2/fileutil.hpp"
#include "her2/image_io.hpp"

namespace her2 {

using nlohmann::json;

namespace {

std::string row_name(std::size_t i, const json& row) {
  std::string name = "manifest row " + std::to_string(i + 1);
  if (row.is_object() && row.contains("slide_id") && row["slide_id"].is_string()) {
    name += " (slide " + row["slide_id"].get<std::string>() + ")";
  }
  return name;
}

std::string required_string(const json& row, const char* key, const std::string& where) {
  if (!row.contains(key) || !row[key].is_string() || row[key].get<std::string>().empty()) {
    throw InputError(where + ": missing " + key);
  }
  return row[key].get<std::string>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

Manifest parse_manifest(std::string_view text, std::filesystem::path base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("cases") || !doc["cases"].is_array()) {
    throw InputError("manifest must be an object with a \"cases\" array");
  }
  static const std::vector<std::string> kKnown = {"patient_id", "slide_id",     "slide_path",
                                                  "patch_dir",  "ground_truth", "curated"};
  Manifest manifest;
  manifest.base_dir = std::move(base_dir);
  const json& cases = doc["cases"];
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const json& row = cases[i];
    const std::string where = row_name(i, row);
    if (!row.is_object()) throw InputError(where + ": not an object");
    for (const auto& [key, value] : row.items()) {
      if (std::find(kKnown.begin(), kKnown.end(), key) == kKnown.end()) {
        throw InputError(where + ": unknown field '" + key + "'");
      }
    }
    ManifestRow r;
    r.patient_id = required_string(row, "patient_id", where);
    r.slide_id = required_string(row, "slide_id", where);
    const bool has_slide = row.contains("slide_path");
    const bool has_dir = row.contains("patch_dir");
    if (has_slide == has_dir) throw InputError(where + ": give exactly one of slide_path or patch_dir");
    if (has_slide) r.slide_path = required_string(row, "slide_path", where);
    if (has_dir) r.patch_dir = required_string(row, "patch_dir", where);
    if (row.contains("ground_truth")) {
      if (!row["ground_truth"].is_string()) throw InputError(where + ": ground_truth must be a string");
      r.ground_truth = row["ground_truth"].get<std::string>();
    }
    if (row.contains("curated")) {
      if (!row["curated"].is_array()) throw InputError(where + ": curated must be an array");
      for (const json& c : row["curated"]) {
        if (!c.is_object()) throw InputError(where + ": curated entries must be objects");
        r.curated.push_back({required_string(c, "path", where + " curated entry"),
                             required_string(c, "label", where + " curated entry")});
      }
    }
    manifest.rows.push_back(std::move(r));
  }
  return manifest;
}

Manifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_file(path), path.parent_path());
}

void require_ground_truth(const Manifest& manifest) {
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    if (!manifest.rows[i].ground_truth) {
      throw InputError("manifest row " + std::to_string(i + 1) + " (slide " +
                       manifest.rows[i].slide_id + "): missing ground_truth");
    }
  }
}

std::vector<RasterPatch> tile_and_filter(const RasterImage& slide, const std::string& slide_id,
                                         const TissueFilterConfig& tissue, int threads,
                                         TilingSummary* summary) {
  tissue.validate();
  std::vector<RasterPatch> tiles = tile_image(slide, kPatchSize, slide_id, threads);
  std::vector<RasterPatch> kept;
  for (auto& t : tiles) {
    if (tissue_filter(t, tissue)) kept.push_back(std::move(t));
  }
  if (summary) *summary = {tiles.size(), kept.size()};
  return kept;
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw InputError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && is_supported_image(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

// Recovers the origin from `<slide>_x<X>_y<Y>.png`; zero when absent.
RasterPatch patch_from_file(const std::filesystem::path& path, const std::string& slide_id) {
  static const std::regex kOrigin(R"(_x(\d+)_y(\d+)$)");
  RasterPatch p{slide_id, 0, 0, load_image(path)};
  std::smatch m;
  const std::string stem = path.stem().string();
  if (std::regex_search(stem, m, kOrigin)) {
    p.origin_x = std::stoi(m[1]);
    p.origin_y = std::stoi(m[2]);
  }
  return p;
}

}  // namespace

std::vector<CaseRecord> load_cases(const Manifest& manifest, const LabelSpace& labels,
                                   const TissueFilterConfig& tissue, int threads) {
  std::vector<CaseRecord> out;
  for (std::size_t i = 0; i < manifest.rows.size(); ++i) {
    const ManifestRow& row = manifest.rows[i];
    const std::string where = "manifest row " + std::to_string(i + 1) + " (slide " + row.slide_id + ")";
    CaseRecord c;
    c.patient_id = row.patient_id;
    c.slide_id = row.slide_id;
    try {
      if (row.ground_truth) c.ground_truth = labels.parse_score(*row.ground_truth);
      for (const ManifestCurated& cur : row.curated) {
        c.curated.push_back({patch_from_file(resolve(manifest.base_dir, cur.path), row.slide_id),
                             labels.parse_patch_class(cur.label)});
      }
      if (!row.slide_path.empty()) {
        const RasterImage slide = load_image(resolve(manifest.base_dir, row.slide_path));
        c.patches = tile_and_filter(slide, row.slide_id, tissue, threads);
      } else {
        for (const auto& p : list_images(resolve(manifest.base_dir, row.patch_dir))) {
          c.patches.push_back(patch_from_file(p, row.slide_id));
        }
      }
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace her2
