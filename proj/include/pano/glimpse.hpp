#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pano/geometry.hpp"
#include "pano/tensor.hpp"

namespace pano {

/// Per-cell provenance of a glimpse canvas.
enum class CellKind : std::uint8_t { FullRes = 0, Downsampled = 1, Invalid = 2 };

/// Retina-like observation: the center block at full resolution, the 8 ring
/// blocks 2x-downsampled and re-expanded onto a canvas() x canvas() canvas.
template <typename S>
struct RetinaGlimpse {
  BlockIndex center;
  Tensor<S> canvas;                   // (canvas, canvas, 3)
  Tensor<std::uint8_t> resolution_map;  // (canvas, canvas), CellKind codes
  int sample_count = 0;               // distinct sensor samples per channel
};

namespace detail {

/// Wrapped read: columns taken mod W, rows assumed valid by caller.
template <typename S>
inline S wrapped_pixel(const Tensor<S>& pan, int y, int x, int c) {
  const int w = pan.dim(1);
  return pan(y, ((x % w) + w) % w, c);
}

}  // namespace detail

/// Full-resolution 3x3-block crop with wrap on x; mask is 0 where the row
/// range falls outside the panorama. Used as the local-loss target.
template <typename S>
std::pair<Tensor<S>, Tensor<std::uint8_t>> ground_truth_crop(const Tensor<S>& pan,
                                                             const GridGeometry& g,
                                                             const BlockIndex& center) {
  if (!g.in_range(center)) throw std::out_of_range("ground_truth_crop: center out of range");
  const int n = g.canvas();
  const int y0 = (center.row - 1) * g.block;
  const int x0 = (center.col - 1) * g.block;
  Tensor<S> crop({n, n, 3});
  Tensor<std::uint8_t> mask({n, n});
  for (int y = 0; y < n; ++y) {
    const int sy = y0 + y;
    const bool valid = sy >= 0 && sy < g.image_h;
    for (int x = 0; x < n; ++x) {
      mask(y, x) = valid ? 1 : 0;
      if (!valid) continue;
      for (int c = 0; c < 3; ++c) crop(y, x, c) = detail::wrapped_pixel(pan, sy, x0 + x, c);
    }
  }
  return {std::move(crop), std::move(mask)};
}

/// Sample a retina glimpse centered on a block. Ring blocks are 2x2
/// mean-pooled and re-expanded nearest-neighbor so the canvas stays uniform;
/// vertically out-of-bounds blocks are zeroed and marked Invalid.
template <typename S>
RetinaGlimpse<S> extract_retina(const Tensor<S>& pan, const GridGeometry& g, const BlockIndex& center) {
  if (!g.in_range(center)) throw std::out_of_range("extract_retina: center out of range");
  const int b = g.block;
  const int n = g.canvas();
  RetinaGlimpse<S> glimpse;
  glimpse.center = center;
  glimpse.canvas = Tensor<S>({n, n, 3});
  glimpse.resolution_map = Tensor<std::uint8_t>::full({n, n}, static_cast<std::uint8_t>(CellKind::Invalid));
  glimpse.sample_count = g.samples_per_glimpse();

  const auto cells = footprint(g, center);
  for (int i = 0; i < 9; ++i) {
    const auto& cell = cells[static_cast<size_t>(i)];
    const int cy0 = (i / 3) * b;  // canvas origin of this block
    const int cx0 = (i % 3) * b;
    if (!cell.valid) continue;    // leave zeros + Invalid
    const int sy0 = cell.block.row * b;
    const int sx0 = cell.block.col * b;
    if (i == 4) {
      // center block, full resolution
      for (int y = 0; y < b; ++y)
        for (int x = 0; x < b; ++x) {
          glimpse.resolution_map(cy0 + y, cx0 + x) = static_cast<std::uint8_t>(CellKind::FullRes);
          for (int c = 0; c < 3; ++c) glimpse.canvas(cy0 + y, cx0 + x, c) = pan(sy0 + y, sx0 + x, c);
        }
    } else {
      // ring block: 2x2 mean pool, then each pooled value fills a 2x2 cell
      for (int y = 0; y < b; y += 2)
        for (int x = 0; x < b; x += 2) {
          for (int c = 0; c < 3; ++c) {
            const S mean = (detail::wrapped_pixel(pan, sy0 + y, sx0 + x, c) +
                            detail::wrapped_pixel(pan, sy0 + y, sx0 + x + 1, c) +
                            detail::wrapped_pixel(pan, sy0 + y + 1, sx0 + x, c) +
                            detail::wrapped_pixel(pan, sy0 + y + 1, sx0 + x + 1, c)) /
                           S(4);
            glimpse.canvas(cy0 + y, cx0 + x, c) = mean;
            glimpse.canvas(cy0 + y, cx0 + x + 1, c) = mean;
            glimpse.canvas(cy0 + y + 1, cx0 + x, c) = mean;
            glimpse.canvas(cy0 + y + 1, cx0 + x + 1, c) = mean;
          }
          glimpse.resolution_map(cy0 + y, cx0 + x) = static_cast<std::uint8_t>(CellKind::Downsampled);
          glimpse.resolution_map(cy0 + y, cx0 + x + 1) = static_cast<std::uint8_t>(CellKind::Downsampled);
          glimpse.resolution_map(cy0 + y + 1, cx0 + x) = static_cast<std::uint8_t>(CellKind::Downsampled);
          glimpse.resolution_map(cy0 + y + 1, cx0 + x + 1) = static_cast<std::uint8_t>(CellKind::Downsampled);
        }
    }
  }
  return glimpse;
}

/// Network input: RGB canvas plus two indicator channels (is-full-res,
/// is-valid), shape (canvas, canvas, 5).
template <typename S>
Tensor<S> glimpse_net_input(const RetinaGlimpse<S>& glimpse) {
  const int n = glimpse.canvas.dim(0);
  Tensor<S> input({n, n, 5});
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      for (int c = 0; c < 3; ++c) input(y, x, c) = glimpse.canvas(y, x, c);
      const auto kind = static_cast<CellKind>(glimpse.resolution_map(y, x));
      input(y, x, 3) = kind == CellKind::FullRes ? S(1) : S(0);
      input(y, x, 4) = kind != CellKind::Invalid ? S(1) : S(0);
    }
  return input;
}

/// Flat pixel index pairs (panorama, canvas) covered by the valid part of a
/// glimpse footprint, in canvas scan order. Shared by memory writes and the
/// differentiable paste op.
inline std::vector<std::pair<int, int>> footprint_pixel_pairs(const GridGeometry& g, const BlockIndex& center) {
  if (!g.in_range(center)) throw std::out_of_range("footprint_pixel_pairs: center out of range");
  const int n = g.canvas();
  const int y0 = (center.row - 1) * g.block;
  const int x0 = (center.col - 1) * g.block;
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<size_t>(n) * n);
  for (int y = 0; y < n; ++y) {
    const int sy = y0 + y;
    if (sy < 0 || sy >= g.image_h) continue;
    for (int x = 0; x < n; ++x) {
      const int sx = ((x0 + x) % g.image_w + g.image_w) % g.image_w;
      pairs.emplace_back(sy * g.image_w + sx, y * n + x);
    }
  }
  return pairs;
}

}  // namespace pano
