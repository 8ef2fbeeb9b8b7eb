#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "pano/geometry.hpp"
#include "pano/glimpse.hpp"
#include "pano/imageops.hpp"
#include "pano/tensor.hpp"

namespace pano {

/// Panorama-sized spatial memory. Reconstructed glimpses are pasted at their
/// true location; occupancy records which pixels hold observed content.
template <typename S>
struct FitInMatrix {
  Tensor<S> data;                  // (H, W, 3)
  Tensor<std::uint8_t> occupancy;  // (H, W)

  static FitInMatrix fresh(const GridGeometry& g) {
    return FitInMatrix{Tensor<S>({g.image_h, g.image_w, 3}), Tensor<std::uint8_t>({g.image_h, g.image_w})};
  }

  std::int64_t occupied_count() const {
    std::int64_t n = 0;
    for (std::int64_t i = 0; i < occupancy.size(); ++i) n += occupancy[i];
    return n;
  }
};

/// Slotted memory for per-glimpse descriptors: one slot per 2x2 blocks,
/// flattened slot-major. Unoccupied slots stay exactly zero.
template <typename S>
struct FitInFeatureVector {
  Tensor<S> slots;  // (slot_count * features_per_slot), slot-major
  std::vector<std::uint8_t> slot_occupancy;
  int slot_count = 0;
  int features_per_slot = 0;

  static FitInFeatureVector fresh(const GridGeometry& g, int features_per_slot) {
    FitInFeatureVector v;
    v.slot_count = pano::slot_count(g);
    v.features_per_slot = features_per_slot;
    v.slots = Tensor<S>({v.slot_count * features_per_slot});
    v.slot_occupancy.assign(static_cast<size_t>(v.slot_count), 0);
    return v;
  }

  std::int64_t length() const { return slots.size(); }
};

/// Paste a reconstructed glimpse into the matrix. Only mask-true pixels are
/// written; columns wrap; newest write wins on overlap.
template <typename S>
void matrix_write(FitInMatrix<S>& m, const Tensor<S>& recon, const GridGeometry& g,
                  const BlockIndex& center, const Tensor<std::uint8_t>& mask) {
  const int n = g.canvas();
  if (recon.rank() != 3 || recon.dim(0) != n || recon.dim(1) != n || recon.dim(2) != 3)
    throw std::invalid_argument("matrix_write: recon shape mismatch");
  if (mask.rank() != 2 || mask.dim(0) != n || mask.dim(1) != n)
    throw std::invalid_argument("matrix_write: mask shape mismatch");
  for (const auto& [dst, src] : footprint_pixel_pairs(g, center)) {
    if (!mask[src]) continue;
    for (int c = 0; c < 3; ++c) m.data[static_cast<std::int64_t>(dst) * 3 + c] = recon[static_cast<std::int64_t>(src) * 3 + c];
    m.occupancy[dst] = 1;
  }
}

template <typename S>
struct MatrixView {
  Tensor<S> data;                // (h, w, 3), area-averaged
  Tensor<S> occupancy_fraction;  // (h, w), mean of occupancy booleans
};

/// Downsampled views of the matrix for the upsampler's skip connections.
/// Each requested scale must divide the matrix dimensions evenly.
template <typename S>
std::vector<MatrixView<S>> matrix_views(const FitInMatrix<S>& m,
                                        const std::vector<std::pair<int, int>>& scales) {
  std::vector<MatrixView<S>> views;
  views.reserve(scales.size());
  Tensor<S> occ(m.occupancy.shape());
  for (std::int64_t i = 0; i < occ.size(); ++i) occ[i] = static_cast<S>(m.occupancy[i]);
  for (const auto& [h, w] : scales) {
    views.push_back(MatrixView<S>{downscale_area(m.data, h, w), downscale_area(occ, h, w)});
  }
  return views;
}

/// Write a descriptor into the slot covering the glimpse center. Slot
/// collisions are resolved newest-write-wins.
template <typename S>
void vector_write(FitInFeatureVector<S>& v, const Tensor<S>& feat, const GridGeometry& g,
                  const BlockIndex& center) {
  if (feat.size() != v.features_per_slot) throw std::invalid_argument("vector_write: feature length mismatch");
  const int slot = slot_of(g, center);
  const std::int64_t base = static_cast<std::int64_t>(slot) * v.features_per_slot;
  for (int j = 0; j < v.features_per_slot; ++j) v.slots[base + j] = feat[j];
  v.slot_occupancy[static_cast<size_t>(slot)] = 1;
}

template <typename S>
void reset(FitInMatrix<S>& m) {
  m.data.array().setZero();
  m.occupancy.array().setZero();
}

template <typename S>
void reset(FitInFeatureVector<S>& v) {
  v.slots.array().setZero();
  std::fill(v.slot_occupancy.begin(), v.slot_occupancy.end(), 0);
}

// --- snapshot serialization (explore step dumps) ---

template <typename S>
void write_snapshot(std::ostream& os, const FitInMatrix<S>& m) {
  const std::int32_t dims[3] = {m.data.dim(0), m.data.dim(1), m.data.dim(2)};
  os.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  std::vector<float> buf(static_cast<size_t>(m.data.size()));
  for (std::int64_t i = 0; i < m.data.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(m.data[i]);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  os.write(reinterpret_cast<const char*>(m.occupancy.data()), static_cast<std::streamsize>(m.occupancy.size()));
}

template <typename S>
FitInMatrix<S> read_matrix_snapshot(std::istream& is) {
  std::int32_t dims[3];
  is.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!is) throw std::runtime_error("matrix snapshot: truncated header");
  FitInMatrix<S> m{Tensor<S>({dims[0], dims[1], dims[2]}), Tensor<std::uint8_t>({dims[0], dims[1]})};
  std::vector<float> buf(static_cast<size_t>(m.data.size()));
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  is.read(reinterpret_cast<char*>(m.occupancy.data()), static_cast<std::streamsize>(m.occupancy.size()));
  if (!is) throw std::runtime_error("matrix snapshot: truncated payload");
  for (std::int64_t i = 0; i < m.data.size(); ++i) m.data[i] = static_cast<S>(buf[static_cast<size_t>(i)]);
  return m;
}

template <typename S>
void write_snapshot(std::ostream& os, const FitInFeatureVector<S>& v) {
  const std::int32_t dims[2] = {v.slot_count, v.features_per_slot};
  os.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  std::vector<float> buf(static_cast<size_t>(v.slots.size()));
  for (std::int64_t i = 0; i < v.slots.size(); ++i) buf[static_cast<size_t>(i)] = static_cast<float>(v.slots[i]);
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  os.write(reinterpret_cast<const char*>(v.slot_occupancy.data()), static_cast<std::streamsize>(v.slot_occupancy.size()));
}

template <typename S>
FitInFeatureVector<S> read_vector_snapshot(std::istream& is) {
  std::int32_t dims[2];
  is.read(reinterpret_cast<char*>(dims), sizeof(dims));
  if (!is) throw std::runtime_error("vector snapshot: truncated header");
  FitInFeatureVector<S> v;
  v.slot_count = dims[0];
  v.features_per_slot = dims[1];
  v.slots = Tensor<S>({v.slot_count * v.features_per_slot});
  v.slot_occupancy.assign(static_cast<size_t>(v.slot_count), 0);
  std::vector<float> buf(static_cast<size_t>(v.slots.size()));
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  is.read(reinterpret_cast<char*>(v.slot_occupancy.data()), static_cast<std::streamsize>(v.slot_occupancy.size()));
  if (!is) throw std::runtime_error("vector snapshot: truncated payload");
  for (std::int64_t i = 0; i < v.slots.size(); ++i) v.slots[i] = static_cast<S>(buf[static_cast<size_t>(i)]);
  return v;
}

}  // namespace pano
