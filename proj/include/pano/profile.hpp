#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pano/geometry.hpp"

namespace pano {

/// A concrete instantiation of the reference architecture. "full" carries the
/// headline constants (128x256 panorama, 16x8 grid, 48x48 glimpse, 6x6
/// bottleneck, 4096-value memory vector); "small" keeps the same grid at half
/// resolution and a quarter of the channels; "micro" divides channels by 8 on
/// a 32x64 image and is the configuration gradient and smoke tests run.
struct Profile {
  std::string name;
  int image_h = 0, image_w = 0, block = 0;
  // local reconstruction encoder widths (two 3x3 convs per stage)
  int enc1 = 0, enc2 = 0, enc3 = 0;
  // glimpse descriptor: 1x1 conv channels + adaptive pool output size
  int desc_channels = 0, desc_pool = 0;
  // fully connected widths
  int bg_hidden = 0;
  int att_hidden = 0;
  int vec_cls_hidden = 0;
  // upsampler per-stage conv widths, coarse to fine
  std::array<int, 4> ups = {0, 0, 0, 0};
  // classifier backbone stage widths
  std::array<int, 4> cls = {0, 0, 0, 0};
  int class_count = 26;

  GridGeometry geometry() const { return GridGeometry::create(image_h, image_w, block); }

  /// Scale set of the multi-scale reconstruction, coarse to fine.
  std::vector<std::pair<int, int>> scales() const {
    return {{image_h / 8, image_w / 8}, {image_h / 4, image_w / 4}, {image_h / 2, image_w / 2}, {image_h, image_w}};
  }

  int bottleneck_hw() const { return geometry().canvas() / 8; }
  int descriptor_length() const { return desc_channels * desc_pool * desc_pool; }
  int vector_length() const { return slot_count(geometry()) * descriptor_length(); }
  int background_h() const { return image_h / 8; }
  int background_w() const { return image_w / 8; }

  void validate() const {
    const auto g = geometry();
    if (g.canvas() % 8 != 0) throw std::invalid_argument("profile: glimpse canvas must be divisible by 8");
    if (g.cols() % 2 != 0 || g.rows() % 2 != 0)
      throw std::invalid_argument("profile: grid dims must be even for the slot layout");
    if (image_h % 8 != 0 || image_w % 8 != 0)
      throw std::invalid_argument("profile: image dims must be divisible by 8 for the scale set");
  }
};

inline Profile full_profile(int class_count = 26) {
  Profile p;
  p.name = "full";
  p.image_h = 128, p.image_w = 256, p.block = 16;
  p.enc1 = 32, p.enc2 = 64, p.enc3 = 128;
  p.desc_channels = 8, p.desc_pool = 4;
  p.bg_hidden = 1024, p.att_hidden = 512, p.vec_cls_hidden = 512;
  p.ups = {64, 64, 32, 16};
  p.cls = {16, 32, 64, 128};
  p.class_count = class_count;
  p.validate();
  return p;
}

inline Profile small_profile(int class_count = 26) {
  Profile p;
  p.name = "small";
  p.image_h = 64, p.image_w = 128, p.block = 8;
  p.enc1 = 8, p.enc2 = 16, p.enc3 = 32;
  p.desc_channels = 2, p.desc_pool = 2;
  p.bg_hidden = 256, p.att_hidden = 128, p.vec_cls_hidden = 128;
  p.ups = {16, 16, 8, 4};
  p.cls = {4, 8, 16, 32};
  p.class_count = class_count;
  p.validate();
  return p;
}

inline Profile micro_profile(int class_count = 26) {
  Profile p;
  p.name = "micro";
  p.image_h = 32, p.image_w = 64, p.block = 8;
  p.enc1 = 4, p.enc2 = 8, p.enc3 = 16;
  p.desc_channels = 1, p.desc_pool = 2;
  p.bg_hidden = 128, p.att_hidden = 64, p.vec_cls_hidden = 64;
  p.ups = {8, 8, 4, 2};
  p.cls = {2, 4, 8, 16};
  p.class_count = class_count;
  p.validate();
  return p;
}

inline Profile profile_by_name(const std::string& name, int class_count = 26) {
  if (name == "full") return full_profile(class_count);
  if (name == "small") return small_profile(class_count);
  if (name == "micro") return micro_profile(class_count);
  throw std::invalid_argument("unknown profile '" + name + "' (expected full|small|micro)");
}

}  // namespace pano
