#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "pano/geometry.hpp"
#include "pano/profile.hpp"

using namespace pano;

TEST_CASE("full grid constants") {
  const GridGeometry g = full_profile().geometry();
  CHECK(g.cols() == 16);
  CHECK(g.rows() == 8);
  CHECK(g.patch_count() == 128);
  CHECK(g.canvas() == 48);
  CHECK(g.samples_per_glimpse() == 16 * 16 + 8 * (8 * 8));
  CHECK(g.samples_per_glimpse() == 768);
}

TEST_CASE("patch indexing") {
  const GridGeometry g = full_profile().geometry();
  CHECK(patch_index(g, {0, 0}) == 0);
  CHECK(patch_index(g, {15, 7}) == 127);
  CHECK(patch_index(g, {3, 2}) == 35);
  // inverse is exact on the whole range
  for (int p = 0; p < g.patch_count(); ++p) CHECK(patch_index(g, block_of(g, p)) == p);
  CHECK_THROWS(patch_index(g, {16, 0}));
  CHECK_THROWS(block_of(g, 128));
  CHECK_THROWS(block_of(g, -1));
}

TEST_CASE("footprint wrap and clamp") {
  const GridGeometry g = full_profile().geometry();

  SUBCASE("interior center") {
    const auto cells = footprint(g, {8, 4});
    for (const auto& c : cells) CHECK(c.valid);
    CHECK(cells[0].block == BlockIndex{7, 3});
    CHECK(cells[8].block == BlockIndex{9, 5});
  }
  SUBCASE("horizontal wrap at the seam") {
    const auto cells = footprint(g, {0, 4});
    CHECK(cells[0].block == BlockIndex{15, 3});
    CHECK(cells[3].block == BlockIndex{15, 4});
    CHECK(cells[6].block == BlockIndex{15, 5});
    for (const auto& c : cells) CHECK(c.valid);
  }
  SUBCASE("vertical clamp at the top row") {
    const auto cells = footprint(g, {8, 0});
    int invalid = 0;
    for (int i = 0; i < 9; ++i)
      if (!cells[i].valid) {
        ++invalid;
        CHECK(cells[i].block.row == -1);
      }
    CHECK(invalid == 3);
  }
}

TEST_CASE("coverage fraction matches the budget arithmetic") {
  const GridGeometry g = full_profile().geometry();
  CHECK(coverage_fraction(g, 6) == doctest::Approx(0.140625).epsilon(0));
  CHECK(coverage_fraction(g, 5) == doctest::Approx(0.1171875).epsilon(0));
  // T=8 matches six full-resolution 32x32 glimpses
  CHECK(coverage_fraction(g, 8) == doctest::Approx(0.1875).epsilon(0));
  CHECK(coverage_fraction(g, 8) == doctest::Approx(6.0 * (32.0 * 32.0) / (128.0 * 256.0)).epsilon(0));
  CHECK(coverage_fraction(g, 0) == 0.0);
  CHECK_THROWS(coverage_fraction(g, -1));
}

TEST_CASE("slot layout") {
  const GridGeometry g = full_profile().geometry();
  CHECK(slot_count(g) == 32);
  CHECK(slot_of(g, {0, 0}) == 0);
  CHECK(slot_of(g, {1, 1}) == 0);
  CHECK(slot_of(g, {2, 0}) == 1);
  CHECK(slot_of(g, {0, 2}) == 8);
  CHECK(slot_of(g, {15, 7}) == 31);
}

TEST_CASE("profile-derived dimensions") {
  const Profile full = full_profile();
  CHECK(full.vector_length() == 4096);
  CHECK(full.descriptor_length() == 128);
  CHECK(full.bottleneck_hw() == 6);
  CHECK(full.background_h() == 16);
  CHECK(full.background_w() == 32);
  const auto s = full.scales();
  CHECK(s[0] == std::pair<int, int>{16, 32});
  CHECK(s[1] == std::pair<int, int>{32, 64});
  CHECK(s[2] == std::pair<int, int>{64, 128});
  CHECK(s[3] == std::pair<int, int>{128, 256});

  const Profile micro = micro_profile();
  CHECK(micro.geometry().patch_count() == 32);
  CHECK(micro.geometry().canvas() == 24);
  CHECK(micro.bottleneck_hw() == 3);
  CHECK(micro.vector_length() == slot_count(micro.geometry()) * micro.descriptor_length());

  const Profile small = small_profile();
  CHECK(small.geometry().patch_count() == 128);  // same grid as full
  CHECK(small.geometry().rows() == 8);
}
