#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "pano/memory.hpp"
#include "pano/profile.hpp"
#include "pano/rng.hpp"

using namespace pano;

namespace {

Tensor<float> random_image(int h, int w, std::uint64_t seed) {
  Tensor<float> img({h, w, 3});
  Rng rng(seed);
  for (std::int64_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(uniform_real(rng));
  return img;
}

/// Brute-force area-average pooling oracle, scalar loops only.
Tensor<float> pool_oracle(const Tensor<float>& img, int oh, int ow) {
  const int h = img.dim(0), w = img.dim(1), ch = img.rank() == 3 ? img.dim(2) : 1;
  const int fy = h / oh, fx = w / ow;
  Tensor<float> out(img.rank() == 3 ? std::vector<int>{oh, ow, ch} : std::vector<int>{oh, ow});
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int c = 0; c < ch; ++c) {
        double acc = 0;
        for (int y = oy * fy; y < (oy + 1) * fy; ++y)
          for (int x = ox * fx; x < (ox + 1) * fx; ++x) acc += img[(static_cast<std::int64_t>(y) * w + x) * ch + c];
        out[(static_cast<std::int64_t>(oy) * ow + ox) * ch + c] = static_cast<float>(acc / (fy * fx));
      }
  return out;
}

Tensor<std::uint8_t> full_mask(const GridGeometry& g) {
  return Tensor<std::uint8_t>::full({g.canvas(), g.canvas()}, 1);
}

}  // namespace

TEST_CASE("fresh memories are zero") {
  const GridGeometry g = full_profile().geometry();
  const auto m = FitInMatrix<float>::fresh(g);
  CHECK(m.data.array().abs().maxCoeff() == 0.0f);
  CHECK(m.occupied_count() == 0);
  const auto v = FitInFeatureVector<float>::fresh(g, 128);
  CHECK(v.length() == 4096);
  CHECK(v.slots.array().abs().maxCoeff() == 0.0f);
  for (auto o : v.slot_occupancy) CHECK(o == 0);
}

TEST_CASE("matrix writes") {
  const GridGeometry g = full_profile().geometry();
  const auto pan = random_image(g.image_h, g.image_w, 31);

  SUBCASE("one interior write occupies the full footprint") {
    auto m = FitInMatrix<float>::fresh(g);
    auto [crop, mask] = ground_truth_crop(pan, g, {8, 4});
    matrix_write(m, crop, g, {8, 4}, mask);
    CHECK(m.occupied_count() == 48 * 48);
  }
  SUBCASE("identical re-write is a no-op") {
    auto m = FitInMatrix<float>::fresh(g);
    auto [crop, mask] = ground_truth_crop(pan, g, {8, 4});
    matrix_write(m, crop, g, {8, 4}, mask);
    const Tensor<float> before = m.data;
    matrix_write(m, crop, g, {8, 4}, mask);
    for (std::int64_t i = 0; i < before.size(); ++i) CHECK(m.data[i] == before[i]);
    CHECK(m.occupied_count() == 48 * 48);
  }
  SUBCASE("two adjacent centers overlap by two block columns") {
    auto m = FitInMatrix<float>::fresh(g);
    for (const BlockIndex c : {BlockIndex{8, 4}, BlockIndex{9, 4}}) {
      auto [crop, mask] = ground_truth_crop(pan, g, c);
      matrix_write(m, crop, g, c, mask);
    }
    // brute-force union oracle
    Tensor<std::uint8_t> expected({g.image_h, g.image_w});
    for (const BlockIndex c : {BlockIndex{8, 4}, BlockIndex{9, 4}})
      for (const auto& [dst, src] : footprint_pixel_pairs(g, c)) expected[dst] = 1;
    std::int64_t union_count = 0;
    for (std::int64_t i = 0; i < expected.size(); ++i) union_count += expected[i];
    CHECK(union_count == 2 * 2304 - 48 * 32);
    CHECK(m.occupied_count() == union_count);
  }
  SUBCASE("occupancy equals the union of valid footprints on random sequences") {
    Rng rng(77);
    for (int trial = 0; trial < 20; ++trial) {
      auto m = FitInMatrix<float>::fresh(g);
      Tensor<std::uint8_t> expected({g.image_h, g.image_w});
      const int writes = static_cast<int>(uniform_int(rng, 1, 10));
      for (int wi = 0; wi < writes; ++wi) {
        const auto center = block_of(g, static_cast<int>(uniform_int(rng, 0, g.patch_count() - 1)));
        auto [crop, mask] = ground_truth_crop(pan, g, center);
        matrix_write(m, crop, g, center, mask);
        for (const auto& [dst, src] : footprint_pixel_pairs(g, center)) expected[dst] = 1;
      }
      for (std::int64_t i = 0; i < expected.size(); ++i) REQUIRE(m.occupancy[i] == expected[i]);
    }
  }
}

TEST_CASE("spatial fidelity: ground-truth pastes reproduce the panorama on occupied pixels") {
  const GridGeometry g = full_profile().geometry();
  const auto pan = random_image(g.image_h, g.image_w, 997);
  Rng rng(4242);
  auto m = FitInMatrix<float>::fresh(g);
  for (int wi = 0; wi < 40; ++wi) {
    const auto center = block_of(g, static_cast<int>(uniform_int(rng, 0, g.patch_count() - 1)));
    auto [crop, mask] = ground_truth_crop(pan, g, center);
    matrix_write(m, crop, g, center, mask);
  }
  for (int y = 0; y < g.image_h; ++y)
    for (int x = 0; x < g.image_w; ++x)
      if (m.occupancy(y, x))
        for (int c = 0; c < 3; ++c) REQUIRE(m.data(y, x, c) == pan(y, x, c));  // bit-exact
}

TEST_CASE("disjoint writes commute") {
  const GridGeometry g = full_profile().geometry();
  const auto pan = random_image(g.image_h, g.image_w, 55);
  // footprints of (2,2) and (10,5) are disjoint
  const BlockIndex a{2, 2}, b{10, 5};
  auto m1 = FitInMatrix<float>::fresh(g);
  auto m2 = FitInMatrix<float>::fresh(g);
  auto [ca, ma] = ground_truth_crop(pan, g, a);
  auto [cb, mb] = ground_truth_crop(pan, g, b);
  matrix_write(m1, ca, g, a, ma);
  matrix_write(m1, cb, g, b, mb);
  matrix_write(m2, cb, g, b, mb);
  matrix_write(m2, ca, g, a, ma);
  for (std::int64_t i = 0; i < m1.data.size(); ++i) REQUIRE(m1.data[i] == m2.data[i]);
  for (std::int64_t i = 0; i < m1.occupancy.size(); ++i) REQUIRE(m1.occupancy[i] == m2.occupancy[i]);
}

TEST_CASE("matrix views") {
  const GridGeometry g = full_profile().geometry();
  const auto scales = full_profile().scales();

  SUBCASE("identity scale returns the data and a 0/1 fraction") {
    auto m = FitInMatrix<float>::fresh(g);
    const auto pan = random_image(g.image_h, g.image_w, 3);
    auto [crop, mask] = ground_truth_crop(pan, g, {5, 5});
    matrix_write(m, crop, g, {5, 5}, mask);
    const auto views = matrix_views(m, {{g.image_h, g.image_w}});
    for (std::int64_t i = 0; i < m.data.size(); ++i) CHECK(views[0].data[i] == m.data[i]);
    for (std::int64_t i = 0; i < m.occupancy.size(); ++i)
      CHECK(views[0].occupancy_fraction[i] == static_cast<float>(m.occupancy[i]));
  }
  SUBCASE("fully occupied constant matrix stays constant at every scale") {
    auto m = FitInMatrix<float>::fresh(g);
    m.data.array().setConstant(0.25f);
    m.occupancy.array().setConstant(1);
    const auto views = matrix_views(m, scales);
    for (const auto& v : views) {
      CHECK(v.data.array().minCoeff() == doctest::Approx(0.25f));
      CHECK(v.data.array().maxCoeff() == doctest::Approx(0.25f));
      CHECK(v.occupancy_fraction.array().minCoeff() == doctest::Approx(1.0f));
    }
  }
  SUBCASE("single interior write at scale (16,32): oracle-counted full cells") {
    auto m = FitInMatrix<float>::fresh(g);
    const auto pan = random_image(g.image_h, g.image_w, 8);
    auto [crop, mask] = ground_truth_crop(pan, g, {8, 4});
    matrix_write(m, crop, g, {8, 4}, mask);
    const auto views = matrix_views(m, {{16, 32}});
    // oracle: pool the occupancy ourselves and count exact-1 cells
    Tensor<float> occ({g.image_h, g.image_w});
    for (std::int64_t i = 0; i < occ.size(); ++i) occ[i] = static_cast<float>(m.occupancy[i]);
    const auto pooled = pool_oracle(occ, 16, 32);
    int full_cells_oracle = 0;
    for (std::int64_t i = 0; i < pooled.size(); ++i)
      if (pooled[i] == 1.0f) ++full_cells_oracle;
    // a 48x48 footprint aligned to 8x8 cells covers exactly 6x6 of them
    CHECK(full_cells_oracle == 36);
    int full_cells = 0;
    for (std::int64_t i = 0; i < views[0].occupancy_fraction.size(); ++i) {
      CHECK(views[0].occupancy_fraction[i] == pooled[i]);
      if (views[0].occupancy_fraction[i] == 1.0f) ++full_cells;
    }
    CHECK(full_cells == full_cells_oracle);
  }
  SUBCASE("random data matches the pooling oracle at all scales") {
    auto m = FitInMatrix<float>::fresh(g);
    m.data = random_image(g.image_h, g.image_w, 999);
    const auto views = matrix_views(m, scales);
    for (size_t k = 0; k < scales.size(); ++k) {
      const auto expected = pool_oracle(m.data, scales[k].first, scales[k].second);
      for (std::int64_t i = 0; i < expected.size(); ++i)
        REQUIRE(views[k].data[i] == doctest::Approx(expected[i]).epsilon(1e-6));
    }
  }
  SUBCASE("non-dividing scale is rejected") {
    auto m = FitInMatrix<float>::fresh(g);
    CHECK_THROWS(matrix_views(m, {{100, 256}}));
  }
}

TEST_CASE("feature vector writes") {
  const GridGeometry g = full_profile().geometry();
  auto v = FitInFeatureVector<float>::fresh(g, 128);

  Tensor<float> feat({128});
  for (int i = 0; i < 128; ++i) feat[i] = static_cast<float>(i + 1);

  SUBCASE("write to the origin slot") {
    vector_write(v, feat, g, {0, 0});
    CHECK(v.slot_occupancy[0] == 1);
    for (int i = 0; i < 128; ++i) CHECK(v.slots[i] == feat[i]);
    for (std::int64_t i = 128; i < v.slots.size(); ++i) CHECK(v.slots[i] == 0.0f);
  }
  SUBCASE("slot collisions keep the newest write") {
    vector_write(v, feat, g, {0, 0});
    Tensor<float> feat2 = feat;
    feat2.array() *= 2.0f;
    vector_write(v, feat2, g, {1, 1});  // same slot 0
    for (int i = 0; i < 128; ++i) CHECK(v.slots[i] == feat2[i]);
    int occupied = 0;
    for (auto o : v.slot_occupancy) occupied += o;
    CHECK(occupied == 1);
  }
  SUBCASE("slots follow the 2x2-block layout") {
    vector_write(v, feat, g, {0, 0});
    vector_write(v, feat, g, {2, 0});
    vector_write(v, feat, g, {0, 2});
    std::vector<int> occupied;
    for (int s = 0; s < v.slot_count; ++s)
      if (v.slot_occupancy[static_cast<size_t>(s)]) occupied.push_back(s);
    CHECK(occupied == std::vector<int>{0, 1, 8});
  }
  SUBCASE("reset clears everything") {
    vector_write(v, feat, g, {5, 5});
    reset(v);
    CHECK(v.slots.array().abs().maxCoeff() == 0.0f);
    for (auto o : v.slot_occupancy) CHECK(o == 0);
  }
}

TEST_CASE("snapshot round-trip") {
  const GridGeometry g = micro_profile().geometry();
  auto m = FitInMatrix<float>::fresh(g);
  m.data = random_image(g.image_h, g.image_w, 5);
  m.occupancy(3, 7) = 1;
  std::stringstream ss;
  write_snapshot(ss, m);
  const auto m2 = read_matrix_snapshot<float>(ss);
  for (std::int64_t i = 0; i < m.data.size(); ++i) CHECK(m2.data[i] == m.data[i]);
  for (std::int64_t i = 0; i < m.occupancy.size(); ++i) CHECK(m2.occupancy[i] == m.occupancy[i]);

  auto v = FitInFeatureVector<float>::fresh(g, micro_profile().descriptor_length());
  Tensor<float> feat({micro_profile().descriptor_length()});
  feat.array().setConstant(0.5f);
  vector_write(v, feat, g, {0, 0});
  std::stringstream vs;
  write_snapshot(vs, v);
  const auto v2 = read_vector_snapshot<float>(vs);
  for (std::int64_t i = 0; i < v.slots.size(); ++i) CHECK(v2.slots[i] == v.slots[i]);
  CHECK(v2.slot_occupancy == v.slot_occupancy);
}
