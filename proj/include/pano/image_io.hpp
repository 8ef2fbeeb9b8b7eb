#pragma once

#include <string>

#include "pano/tensor.hpp"

namespace pano {

/// Decode a PNG or JPEG file (sniffed by magic bytes) to an RGB image with
/// values in [0,1]. Throws std::runtime_error on unreadable/undecodable input.
Tensor<float> read_image_rgb(const std::string& path);

/// Write an [0,1] RGB image as 8-bit PNG (values rounded and clamped).
void write_png_rgb(const std::string& path, const Tensor<float>& image);

}  // namespace pano
