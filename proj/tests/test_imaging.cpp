#include <cmath>

#include "doctest.h"
#include "her2/error.hpp"
#include "her2/imaging.hpp"
#include "her2/random.hpp"
#include "oracles.hpp"

using namespace her2;

TEST_CASE("tile_image grid division") {
  const RasterImage img(1000, 750, Rgb{10, 20, 30});
  const auto patches = tile_image(img, 250, "s");
  REQUIRE(patches.size() == 12);
  std::size_t i = 0;
  for (int y : {0, 250, 500}) {
    for (int x : {0, 250, 500, 750}) {
      CHECK(patches[i].origin_x == x);
      CHECK(patches[i].origin_y == y);
      CHECK(patches[i].slide_id == "s");
      ++i;
    }
  }
  CHECK(tile_image(RasterImage(250, 250), 250).size() == 1);
  CHECK(tile_image(RasterImage(600, 600), 250).size() == 4);
  CHECK(tile_image(RasterImage(249, 600), 250).empty());
}

TEST_CASE("tile_image rejects empty input") {
  CHECK_THROWS_AS(tile_image(RasterImage(), 250), InputError);
  CHECK_THROWS_AS(tile_image(RasterImage(10, 10), 0), InputError);
}

TEST_CASE("tile_image count and content property") {
  Rng rng(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(90));
    const int h = 1 + static_cast<int>(rng.below(90));
    const int tile = 1 + static_cast<int>(rng.below(30));
    const RasterImage img = oracle::random_image(w, h, rng);
    const auto patches = tile_image(img, tile, "p", 1 + trial % 3);
    REQUIRE(patches.size() == static_cast<std::size_t>((w / tile) * (h / tile)));
    for (const auto& p : patches) {
      REQUIRE(p.data.width() == tile);
      for (int y = 0; y < tile; ++y)
        for (int x = 0; x < tile; ++x) REQUIRE(p.data.at(x, y) == img.at(p.origin_x + x, p.origin_y + y));
    }
  }
}

TEST_CASE("tissue_filter examples") {
  TissueFilterConfig cfg;
  RasterPatch white{"s", 0, 0, RasterImage(250, 250, Rgb{255, 255, 255})};
  RasterPatch black{"s", 0, 0, RasterImage(250, 250, Rgb{0, 0, 0})};
  CHECK_FALSE(tissue_filter(white, cfg));
  CHECK_FALSE(tissue_filter(black, cfg));

  // Half mid-brown: luma 0.299*150+0.587*100+0.114*60 = 110.39 < 220, so the
  // background fraction is 0.5 and the std is (255-110.39)/2 = 72.3.
  RasterImage mixed(250, 250, Rgb{255, 255, 255});
  for (int y = 0; y < 125; ++y)
    for (int x = 0; x < 250; ++x) mixed.set(x, y, {150, 100, 60});
  const TissueStats st = tissue_stats(mixed, cfg.background_luma_threshold);
  CHECK(st.background_fraction == doctest::Approx(0.5));
  CHECK(st.luma_stddev == doctest::Approx((255.0 - 110.39) / 2.0));
  RasterPatch p{"s", 0, 0, mixed};
  CHECK(tissue_filter(p, cfg));
  CHECK(tissue_filter(p, cfg) == tissue_filter(p, cfg));
}

TEST_CASE("tissue filter thresholds are inclusive as configured") {
  // 3/4 background exactly passes; stddev just below the minimum fails.
  RasterImage img(4, 1, Rgb{255, 255, 255});
  img.set(0, 0, {0, 0, 0});
  TissueFilterConfig cfg;
  CHECK(tissue_filter({"s", 0, 0, img}, cfg));
  cfg.min_luma_stddev = 200.0;
  CHECK_FALSE(tissue_filter({"s", 0, 0, img}, cfg));
  cfg = {};
  cfg.max_background_fraction = 1.5;
  CHECK_THROWS_AS(cfg.validate(), InputError);
}

TEST_CASE("rgb_to_hsv examples") {
  Hsv red = rgb_to_hsv(Rgb{255, 0, 0});
  CHECK(red.h == 0.0);
  CHECK(red.s == 1.0);
  CHECK(red.v == 1.0);
  Hsv gray = rgb_to_hsv(Rgb{128, 128, 128});
  CHECK(gray.h == 0.0);
  CHECK(gray.s == 0.0);
  CHECK(gray.v == doctest::Approx(128.0 / 255.0));
  // H = 60 * (4 + (R-G)/(max-min)) = 60 * (4 - 128/255)
  Hsv azure = rgb_to_hsv(Rgb{0, 128, 255});
  CHECK(azure.h == doctest::Approx(60.0 * (4.0 - 128.0 / 255.0)));
  CHECK(azure.h == doctest::Approx(209.88).epsilon(1e-4));
  CHECK(azure.s == 1.0);
  CHECK(azure.v == 1.0);
}

TEST_CASE("hsv round trip within one level") {
  Rng rng(5);
  for (int i = 0; i < 20000; ++i) {
    const Rgb c{static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)),
                static_cast<std::uint8_t>(rng.below(256))};
    const Hsv hsv = rgb_to_hsv(c);
    REQUIRE(hsv.h >= 0.0);
    REQUIRE(hsv.h < 360.0);
    const Rgb back = hsv_to_rgb(hsv);
    REQUIRE(std::abs(back.r - c.r) <= 1);
    REQUIRE(std::abs(back.g - c.g) <= 1);
    REQUIRE(std::abs(back.b - c.b) <= 1);
  }
}

TEST_CASE("patch file name") {
  RasterPatch p{"slide7", 500, 250, RasterImage(1, 1)};
  CHECK(patch_file_name(p) == "slide7_x500_y250.png");
}
