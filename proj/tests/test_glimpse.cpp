#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pano/glimpse.hpp"
#include "pano/imageops.hpp"
#include "pano/profile.hpp"
#include "pano/rng.hpp"

using namespace pano;

namespace {

Tensor<float> random_pano(const GridGeometry& g, std::uint64_t seed) {
  Tensor<float> img({g.image_h, g.image_w, 3});
  Rng rng(seed);
  for (std::int64_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(uniform_real(rng));
  return img;
}

}  // namespace

TEST_CASE("constant panorama gives constant canvas on valid cells") {
  const GridGeometry g = full_profile().geometry();
  const auto pan = Tensor<float>::full({g.image_h, g.image_w, 3}, 0.37f);
  const auto glimpse = extract_retina(pan, g, {5, 3});
  CHECK(glimpse.sample_count == 768);
  for (int y = 0; y < g.canvas(); ++y)
    for (int x = 0; x < g.canvas(); ++x) {
      REQUIRE(glimpse.resolution_map(y, x) != static_cast<std::uint8_t>(CellKind::Invalid));
      for (int c = 0; c < 3; ++c) CHECK(glimpse.canvas(y, x, c) == doctest::Approx(0.37f));
    }
}

TEST_CASE("ring cells are the average of their 2x2 source tile") {
  const GridGeometry g = full_profile().geometry();
  Tensor<float> pan({g.image_h, g.image_w, 3});
  // checkerboard rows: values {0,0,1,1} vertically within each 2x2 tile
  for (int y = 0; y < g.image_h; ++y)
    for (int x = 0; x < g.image_w; ++x)
      for (int c = 0; c < 3; ++c) pan(y, x, c) = static_cast<float>(y % 2);
  const auto glimpse = extract_retina(pan, g, {5, 3});
  // any downsampled cell must hold the tile mean 0.5
  for (int y = 0; y < g.canvas(); ++y)
    for (int x = 0; x < g.canvas(); ++x)
      if (glimpse.resolution_map(y, x) == static_cast<std::uint8_t>(CellKind::Downsampled))
        CHECK(glimpse.canvas(y, x, 0) == doctest::Approx(0.5f));
}

TEST_CASE("center block matches a naive crop bit-exactly") {
  const GridGeometry g = full_profile().geometry();
  const auto pan = random_pano(g, 7);
  const BlockIndex center{6, 4};
  const auto glimpse = extract_retina(pan, g, center);
  for (int y = 0; y < g.block; ++y)
    for (int x = 0; x < g.block; ++x)
      for (int c = 0; c < 3; ++c) {
        const float expected = pan(center.row * g.block + y, center.col * g.block + x, c);
        CHECK(glimpse.canvas(g.block + y, g.block + x, c) == expected);
        CHECK(glimpse.resolution_map(g.block + y, g.block + x) == static_cast<std::uint8_t>(CellKind::FullRes));
      }
}

TEST_CASE("vertical out-of-bounds cells are zero and invalid") {
  const GridGeometry g = full_profile().geometry();
  const auto pan = random_pano(g, 9);
  const auto glimpse = extract_retina(pan, g, {4, 0});
  for (int y = 0; y < g.block; ++y)  // canvas rows above the image
    for (int x = 0; x < g.canvas(); ++x) {
      CHECK(glimpse.resolution_map(y, x) == static_cast<std::uint8_t>(CellKind::Invalid));
      for (int c = 0; c < 3; ++c) CHECK(glimpse.canvas(y, x, c) == 0.0f);
    }
}

TEST_CASE("ground truth crop mask and wrap") {
  const GridGeometry g = full_profile().geometry();
  const auto pan = random_pano(g, 11);

  SUBCASE("interior center: mask all true") {
    const auto [crop, mask] = ground_truth_crop(pan, g, {6, 4});
    for (std::int64_t i = 0; i < mask.size(); ++i) CHECK(mask[i] == 1);
  }
  SUBCASE("top row center: top block rows masked out") {
    const auto [crop, mask] = ground_truth_crop(pan, g, {6, 0});
    for (int y = 0; y < g.block; ++y)
      for (int x = 0; x < g.canvas(); ++x) CHECK(mask(y, x) == 0);
    for (int y = g.block; y < g.canvas(); ++y)
      for (int x = 0; x < g.canvas(); ++x) CHECK(mask(y, x) == 1);
  }
  SUBCASE("crop across the seam reads wrapped columns") {
    const auto [crop, mask] = ground_truth_crop(pan, g, {0, 4});
    for (int y = 0; y < g.canvas(); ++y)
      for (int x = 0; x < g.block; ++x)  // left block comes from the last column of blocks
        for (int c = 0; c < 3; ++c)
          CHECK(crop(y, x, c) == pan(3 * g.block + y, (15 * g.block + x) % g.image_w, c));
  }
}

TEST_CASE("wrap equivariance: crop of shifted panorama equals crop at shifted center") {
  const GridGeometry g = full_profile().geometry();
  const auto pan = random_pano(g, 13);
  // shift by one block worth of columns
  const auto shifted = wrap_columns(pan, g.block);
  for (const BlockIndex center : {BlockIndex{3, 2}, BlockIndex{15, 6}, BlockIndex{0, 0}}) {
    const BlockIndex shifted_center{(center.col + 1) % g.cols(), center.row};
    const auto [a, am] = ground_truth_crop(shifted, g, shifted_center);
    const auto [b, bm] = ground_truth_crop(pan, g, center);
    for (std::int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    const auto ga = extract_retina(shifted, g, shifted_center);
    const auto gb = extract_retina(pan, g, center);
    for (std::int64_t i = 0; i < ga.canvas.size(); ++i) CHECK(ga.canvas[i] == gb.canvas[i]);
  }
}

TEST_CASE("glimpse net input carries indicator channels") {
  const GridGeometry g = micro_profile().geometry();
  const auto pan = random_pano(g, 17);
  const auto glimpse = extract_retina(pan, g, {0, 0});
  const auto input = glimpse_net_input(glimpse);
  REQUIRE(input.shape() == std::vector<int>{g.canvas(), g.canvas(), 5});
  for (int y = 0; y < g.canvas(); ++y)
    for (int x = 0; x < g.canvas(); ++x) {
      const auto kind = static_cast<CellKind>(glimpse.resolution_map(y, x));
      CHECK(input(y, x, 3) == (kind == CellKind::FullRes ? 1.0f : 0.0f));
      CHECK(input(y, x, 4) == (kind != CellKind::Invalid ? 1.0f : 0.0f));
    }
}

TEST_CASE("footprint pixel pairs cover exactly the valid crop") {
  const GridGeometry g = full_profile().geometry();

  SUBCASE("interior footprint covers the full canvas") {
    const auto pairs = footprint_pixel_pairs(g, {6, 4});
    CHECK(pairs.size() == static_cast<size_t>(g.canvas() * g.canvas()));
  }
  SUBCASE("top-row footprint drops the invalid block row") {
    const auto pairs = footprint_pixel_pairs(g, {6, 0});
    CHECK(pairs.size() == static_cast<size_t>(g.canvas() * (g.canvas() - g.block)));
  }
  SUBCASE("pairs agree with the mask from ground_truth_crop") {
    const auto pan = random_pano(g, 23);
    const auto [crop, mask] = ground_truth_crop(pan, g, {0, 7});
    const auto pairs = footprint_pixel_pairs(g, {0, 7});
    std::int64_t mask_true = 0;
    for (std::int64_t i = 0; i < mask.size(); ++i) mask_true += mask[i];
    CHECK(static_cast<std::int64_t>(pairs.size()) == mask_true);
    for (const auto& [dst, src] : pairs)
      for (int c = 0; c < 3; ++c) CHECK(pan[static_cast<std::int64_t>(dst) * 3 + c] == crop[static_cast<std::int64_t>(src) * 3 + c]);
  }
}
