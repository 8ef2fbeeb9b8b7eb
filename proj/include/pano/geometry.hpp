#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace pano {

/// One cell of the glimpse grid. col counts left-to-right, row top-to-bottom.
struct BlockIndex {
  int col = 0;
  int row = 0;
  friend bool operator==(const BlockIndex& a, const BlockIndex& b) {
    return a.col == b.col && a.row == b.row;
  }
};

/// Block grid over a panorama: cols*block == W, rows*block == H.
/// The panorama wraps horizontally; vertical overflow is out of bounds.
struct GridGeometry {
  int image_h = 0;
  int image_w = 0;
  int block = 0;

  static GridGeometry create(int image_h, int image_w, int block) {
    if (block <= 0 || block % 2 != 0) throw std::invalid_argument("geometry: block size must be positive and even");
    if (image_h % block != 0 || image_w % block != 0)
      throw std::invalid_argument("geometry: block size must divide image dimensions");
    return GridGeometry{image_h, image_w, block};
  }

  int cols() const { return image_w / block; }
  int rows() const { return image_h / block; }
  int patch_count() const { return cols() * rows(); }
  /// Glimpse canvas is the 3x3-block footprint around the center.
  int canvas() const { return 3 * block; }
  /// Sensor samples per channel per glimpse: block^2 full-res + 8 ring blocks
  /// at (block/2)^2 each = 3*block^2.
  int samples_per_glimpse() const { return 3 * block * block; }

  bool in_range(const BlockIndex& b) const {
    return b.col >= 0 && b.col < cols() && b.row >= 0 && b.row < rows();
  }
};

inline int patch_index(const GridGeometry& g, const BlockIndex& b) {
  if (!g.in_range(b)) throw std::out_of_range("patch_index: block out of range");
  return b.row * g.cols() + b.col;
}

inline BlockIndex block_of(const GridGeometry& g, int patch) {
  if (patch < 0 || patch >= g.patch_count()) throw std::out_of_range("block_of: patch id out of range");
  return BlockIndex{patch % g.cols(), patch / g.cols()};
}

struct FootprintCell {
  BlockIndex block;  // col already wrapped; row may be outside [0, rows) when invalid
  bool valid = false;
};

/// The 3x3 neighborhood around a center block, row-major (dy=-1..1, dx=-1..1).
/// Columns wrap around the panorama seam; rows outside the image are invalid.
inline std::array<FootprintCell, 9> footprint(const GridGeometry& g, const BlockIndex& center) {
  if (!g.in_range(center)) throw std::out_of_range("footprint: center out of range");
  std::array<FootprintCell, 9> cells{};
  int i = 0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx, ++i) {
      const int row = center.row + dy;
      const int col = (center.col + dx + g.cols()) % g.cols();
      cells[static_cast<size_t>(i)] = FootprintCell{BlockIndex{col, row}, row >= 0 && row < g.rows()};
    }
  }
  return cells;
}

/// Fraction of panorama pixels (per channel) sampled by T glimpses.
inline double coverage_fraction(const GridGeometry& g, int T) {
  if (T < 0) throw std::invalid_argument("coverage_fraction: negative T");
  return static_cast<double>(T) * g.samples_per_glimpse() /
         (static_cast<double>(g.image_h) * g.image_w);
}

/// Memory slot grid: one slot per 2x2 blocks, row-major over slots.
inline int slot_cols(const GridGeometry& g) { return g.cols() / 2; }
inline int slot_rows(const GridGeometry& g) { return g.rows() / 2; }
inline int slot_count(const GridGeometry& g) { return slot_cols(g) * slot_rows(g); }

inline int slot_of(const GridGeometry& g, const BlockIndex& b) {
  if (!g.in_range(b)) throw std::out_of_range("slot_of: block out of range");
  return (b.row / 2) * slot_cols(g) + (b.col / 2);
}

}  // namespace pano
