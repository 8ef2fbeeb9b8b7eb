#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pano/tensor.hpp"

namespace pano {

/// Canonical panorama resolution. All geometry constants derive from it.
inline constexpr int kPanoH = 128;
inline constexpr int kPanoW = 256;
inline constexpr int kDefaultClassCount = 26;

struct PanoramaSample {
  std::string id;
  Tensor<float> pixels;  // (128, 256, 3) in [0,1]
  std::optional<int> label;
};

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory
  std::optional<int> label;
  std::string split;  // "train" | "test"
};

struct DatasetManifest {
  std::string root;  // directory containing the manifest file
  std::vector<ManifestEntry> entries;
  std::vector<std::string> class_names;

  std::vector<const ManifestEntry*> split_entries(const std::string& split) const;
};

/// Parse a JSON-Lines manifest (one {"path","label","split"} object per line)
/// plus its classes.json sidecar when present. Rejects duplicate paths,
/// unknown splits and labels outside the class range, reporting line numbers.
DatasetManifest load_manifest(const std::string& manifest_path);

/// Decode, resize to 128x256 (bilinear) and scale to [0,1].
PanoramaSample load_panorama(const DatasetManifest& manifest, const ManifestEntry& entry);

/// Horizontal wrap augmentation: column c moves to (c+offset) mod W.
/// The offset is taken mod W, so any integer is accepted.
PanoramaSample augment_wrap(const PanoramaSample& sample, int offset);

/// Synthetic panorama generator parameters. The corpus stands in for a real
/// 360-degree dataset at desk scale: x-periodic scenes with a sky/ground
/// horizon layout and a class-dependent palette and shape vocabulary.
struct SynthSpec {
  int count = 0;
  std::uint64_t seed = 0;
  int class_count = kDefaultClassCount;
  // visual parameters
  double horizon_min = 0.40;  // fraction of image height
  double horizon_max = 0.60;
  double saturation_min = 0.50;
  double saturation_max = 0.95;
  int shapes_min = 6;
  int shapes_max = 12;
};

/// Deterministic given the spec; labels are assigned round-robin.
std::vector<PanoramaSample> synth_generate(const SynthSpec& spec);

std::vector<std::string> synth_class_names(int class_count);

/// Write a corpus directory: images/*.png + manifest.jsonl + classes.json.
/// The last (1 - train_fraction) of each generator sequence becomes the test
/// split. Returns the manifest path.
std::string write_corpus(const std::string& dir, const SynthSpec& spec, double train_fraction);

}  // namespace pano
