#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "pano/tensor.hpp"

namespace pano {

/// Area-average downsample by integer factors (output must divide input).
template <typename S>
Tensor<S> downscale_area(const Tensor<S>& img, int out_h, int out_w) {
  const int h = img.dim(0), w = img.dim(1), ch = img.rank() == 3 ? img.dim(2) : 1;
  if (out_h <= 0 || out_w <= 0 || h % out_h != 0 || w % out_w != 0)
    throw std::invalid_argument("downscale_area: output must divide input");
  const int fy = h / out_h, fx = w / out_w;
  Tensor<S> out(img.rank() == 3 ? std::vector<int>{out_h, out_w, ch} : std::vector<int>{out_h, out_w});
  const S inv = S(1) / static_cast<S>(fy * fx);
  for (int oy = 0; oy < out_h; ++oy)
    for (int ox = 0; ox < out_w; ++ox)
      for (int c = 0; c < ch; ++c) {
        S acc = 0;
        for (int dy = 0; dy < fy; ++dy)
          for (int dx = 0; dx < fx; ++dx)
            acc += img[((static_cast<std::int64_t>(oy) * fy + dy) * w + ox * fx + dx) * ch + c];
        out[(static_cast<std::int64_t>(oy) * out_w + ox) * ch + c] = acc * inv;
      }
  return out;
}

/// Bilinear resize with half-pixel sample centers and edge clamping.
/// Resizing to the source size is an exact copy.
template <typename S>
Tensor<S> resize_bilinear(const Tensor<S>& img, int out_h, int out_w) {
  const int h = img.dim(0), w = img.dim(1), ch = img.dim(2);
  if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("resize_bilinear: non-positive output size");
  if (out_h == h && out_w == w) return img;
  Tensor<S> out({out_h, out_w, ch});
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    if (fy < 0) fy = 0;
    int y0 = static_cast<int>(fy);
    if (y0 > h - 1) y0 = h - 1;
    const int y1 = y0 + 1 > h - 1 ? h - 1 : y0 + 1;
    const double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      if (fx < 0) fx = 0;
      int x0 = static_cast<int>(fx);
      if (x0 > w - 1) x0 = w - 1;
      const int x1 = x0 + 1 > w - 1 ? w - 1 : x0 + 1;
      const double wx = fx - x0;
      for (int c = 0; c < ch; ++c) {
        const double top = (1.0 - wx) * img(y0, x0, c) + wx * img(y0, x1, c);
        const double bot = (1.0 - wx) * img(y1, x0, c) + wx * img(y1, x1, c);
        out(oy, ox, c) = static_cast<S>((1.0 - wy) * top + wy * bot);
      }
    }
  }
  return out;
}

/// Cyclic column shift: column c of the input lands at column (c+offset) mod W.
template <typename S>
Tensor<S> wrap_columns(const Tensor<S>& img, int offset) {
  const int h = img.dim(0), w = img.dim(1), ch = img.dim(2);
  offset = ((offset % w) + w) % w;
  if (offset == 0) return img;
  Tensor<S> out(img.shape());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int dst = (x + offset) % w;
      for (int c = 0; c < ch; ++c) out(y, dst, c) = img(y, x, c);
    }
  return out;
}

}  // namespace pano
