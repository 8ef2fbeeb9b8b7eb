#include "pano/dataset.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "pano/image_io.hpp"
#include "pano/imageops.hpp"
#include "pano/rng.hpp"

namespace pano {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::vector<const ManifestEntry*> DatasetManifest::split_entries(const std::string& split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(&e);
  return out;
}

DatasetManifest load_manifest(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("manifest: cannot open " + manifest_path);

  DatasetManifest manifest;
  manifest.root = fs::path(manifest_path).parent_path().string();

  const fs::path sidecar = fs::path(manifest.root) / "classes.json";
  if (fs::exists(sidecar)) {
    std::ifstream cin_(sidecar);
    json classes;
    try {
      cin_ >> classes;
    } catch (const json::exception& e) {
      throw std::runtime_error("manifest: bad classes.json: " + std::string(e.what()));
    }
    if (!classes.is_array()) throw std::runtime_error("manifest: classes.json must be an array");
    for (const auto& name : classes) manifest.class_names.push_back(name.get<std::string>());
  } else {
    manifest.class_names = synth_class_names(kDefaultClassCount);
  }
  const int class_count = static_cast<int>(manifest.class_names.size());

  std::unordered_set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::exception& e) {
      throw std::runtime_error("manifest: line " + std::to_string(line_no) + ": parse error: " + e.what());
    }
    const auto fail = [&](const std::string& why) {
      throw std::runtime_error("manifest: line " + std::to_string(line_no) + ": " + why);
    };
    if (!obj.is_object() || !obj.contains("path") || !obj["path"].is_string()) fail("missing string field 'path'");
    ManifestEntry entry;
    entry.path = obj["path"].get<std::string>();
    if (!seen.insert(entry.path).second) fail("duplicate path '" + entry.path + "'");
    if (obj.contains("label") && !obj["label"].is_null()) {
      if (!obj["label"].is_number_integer()) fail("field 'label' must be an integer or null");
      const int label = obj["label"].get<int>();
      if (label < 0 || label >= class_count)
        fail("label " + std::to_string(label) + " out of range for " + std::to_string(class_count) + " classes");
      entry.label = label;
    }
    if (!obj.contains("split") || !obj["split"].is_string()) fail("missing string field 'split'");
    entry.split = obj["split"].get<std::string>();
    if (entry.split != "train" && entry.split != "test") fail("split must be 'train' or 'test'");
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

PanoramaSample load_panorama(const DatasetManifest& manifest, const ManifestEntry& entry) {
  const fs::path path = fs::path(manifest.root) / entry.path;
  Tensor<float> img = read_image_rgb(path.string());
  if (img.dim(0) != kPanoH || img.dim(1) != kPanoW) img = resize_bilinear(img, kPanoH, kPanoW);
  return PanoramaSample{entry.path, std::move(img), entry.label};
}

PanoramaSample augment_wrap(const PanoramaSample& sample, int offset) {
  return PanoramaSample{sample.id, wrap_columns(sample.pixels, offset), sample.label};
}

namespace {

struct Rgb {
  double r, g, b;
};

Rgb hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double c = v * s;
  const double hp = h * 6.0;
  const double x = c * (1.0 - std::fabs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) {
    r = c, g = x;
  } else if (hp < 2) {
    r = x, g = c;
  } else if (hp < 3) {
    g = c, b = x;
  } else if (hp < 4) {
    g = x, b = c;
  } else if (hp < 5) {
    r = x, b = c;
  } else {
    r = c, b = x;
  }
  const double m = v - c;
  return {r + m, g + m, b + m};
}

inline void put(Tensor<float>& img, int y, int x, const Rgb& color) {
  const int w = img.dim(1);
  x = ((x % w) + w) % w;
  if (y < 0 || y >= img.dim(0)) return;
  img(y, x, 0) = static_cast<float>(std::clamp(color.r, 0.0, 1.0));
  img(y, x, 1) = static_cast<float>(std::clamp(color.g, 0.0, 1.0));
  img(y, x, 2) = static_cast<float>(std::clamp(color.b, 0.0, 1.0));
}

/// Per-class visual identity: palette hues and the shape vocabulary are a
/// function of the class id only; per-sample variation comes from the rng.
struct ClassStyle {
  double sky_hue, ground_hue, accent_hue;
  int shape_kind;    // 0 disks, 1 peaks, 2 skyline, 3 posts
  int horizon_freq;  // integral so the horizon curve stays x-periodic
};

ClassStyle class_style(int label) {
  const double golden = 0.61803398874989484;
  ClassStyle s;
  s.sky_hue = std::fmod(0.05 + label * golden, 1.0);
  s.ground_hue = std::fmod(s.sky_hue + 0.37 + 0.11 * ((label * 7) % 5), 1.0);
  s.accent_hue = std::fmod(s.sky_hue + 0.5, 1.0);
  s.shape_kind = label % 4;
  s.horizon_freq = 1 + (label % 3);
  return s;
}

}  // namespace

std::vector<std::string> synth_class_names(int class_count) {
  std::vector<std::string> names;
  names.reserve(static_cast<size_t>(class_count));
  for (int i = 0; i < class_count; ++i) {
    std::ostringstream os;
    os << "scene" << (i < 10 ? "0" : "") << i;
    names.push_back(os.str());
  }
  return names;
}

std::vector<PanoramaSample> synth_generate(const SynthSpec& spec) {
  if (spec.count <= 0) throw std::invalid_argument("synth: count must be positive");
  if (spec.class_count < 2) throw std::invalid_argument("synth: class_count must be at least 2");

  const int h = kPanoH, w = kPanoW;
  std::vector<PanoramaSample> samples;
  samples.reserve(static_cast<size_t>(spec.count));

  for (int i = 0; i < spec.count; ++i) {
    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(i)));
    const int label = i % spec.class_count;
    const ClassStyle style = class_style(label);

    const double sat = uniform_range(rng, spec.saturation_min, spec.saturation_max);
    const double horizon_base = uniform_range(rng, spec.horizon_min, spec.horizon_max) * h;
    const double horizon_amp = uniform_range(rng, 0.01, 0.05) * h;
    const double horizon_phase = uniform_range(rng, 0.0, 2.0 * M_PI);
    const double sky_value_top = uniform_range(rng, 0.80, 0.95);
    const double ground_value = uniform_range(rng, 0.35, 0.55);

    Tensor<float> img({h, w, 3});
    std::vector<double> horizon(static_cast<size_t>(w));
    for (int x = 0; x < w; ++x)
      horizon[static_cast<size_t>(x)] =
          horizon_base + horizon_amp * std::sin(2.0 * M_PI * style.horizon_freq * x / w + horizon_phase);

    for (int x = 0; x < w; ++x) {
      const double hz = horizon[static_cast<size_t>(x)];
      for (int y = 0; y < h; ++y) {
        if (y < hz) {
          const double t = y / std::max(hz, 1.0);  // 0 at zenith, 1 at horizon
          put(img, y, x, hsv_to_rgb(style.sky_hue, sat * (0.35 + 0.55 * t), sky_value_top - 0.18 * t));
        } else {
          const double t = (y - hz) / std::max(h - hz, 1.0);
          put(img, y, x, hsv_to_rgb(style.ground_hue, sat * (0.9 - 0.3 * t), ground_value * (1.0 - 0.45 * t)));
        }
      }
      // a dark horizon seam gives every scene a sharp detail line
      const int hy = static_cast<int>(hz);
      put(img, hy, x, hsv_to_rgb(style.ground_hue, sat, 0.12));
    }

    const int shape_count = static_cast<int>(uniform_int(rng, spec.shapes_min, spec.shapes_max));
    for (int sidx = 0; sidx < shape_count; ++sidx) {
      const int cx = static_cast<int>(uniform_int(rng, 0, w - 1));
      const double hz = horizon[static_cast<size_t>(cx)];
      const int size = static_cast<int>(uniform_int(rng, 5, 14));
      const bool bright = uniform_real(rng) < 0.5;
      const Rgb color = hsv_to_rgb(style.accent_hue, sat, bright ? 0.9 : 0.15);
      switch (style.shape_kind) {
        case 0: {  // disks floating just above the horizon
          const int cy = static_cast<int>(hz - size - uniform_int(rng, 0, 6));
          for (int dy = -size; dy <= size; ++dy)
            for (int dx = -size; dx <= size; ++dx)
              if (dx * dx + dy * dy <= size * size) put(img, cy + dy, cx + dx, color);
          break;
        }
        case 1: {  // triangular peaks rising from the horizon
          for (int dy = 0; dy < size * 2; ++dy) {
            const int half = (size * 2 - dy) / 2;
            const int y = static_cast<int>(hz) - dy;
            for (int dx = -half; dx <= half; ++dx) put(img, y, cx + dx, color);
          }
          break;
        }
        case 2: {  // rectangular skyline standing on the horizon
          const int height = size * 2;
          const int half = std::max(2, size / 2);
          for (int dy = 0; dy < height; ++dy)
            for (int dx = -half; dx <= half; ++dx) put(img, static_cast<int>(hz) - dy, cx + dx, color);
          break;
        }
        default: {  // thin posts crossing the horizon
          for (int dy = -size * 2; dy <= size / 2; ++dy)
            for (int dx = -1; dx <= 1; ++dx) put(img, static_cast<int>(hz) + dy, cx + dx, color);
          break;
        }
      }
    }

    std::ostringstream id;
    id << "synth-" << std::setw(6) << std::setfill('0') << i;
    samples.push_back(PanoramaSample{id.str(), std::move(img), label});
  }
  return samples;
}

std::string write_corpus(const std::string& dir, const SynthSpec& spec, double train_fraction) {
  train_fraction = std::clamp(train_fraction, 0.0, 1.0);
  const fs::path root(dir);
  fs::create_directories(root / "images");

  const auto samples = synth_generate(spec);
  const auto train_count = static_cast<std::int64_t>(std::llround(train_fraction * spec.count));

  std::ofstream manifest(root / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("synth: cannot write manifest under " + dir);
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::string rel = "images/" + s.id + ".png";
    write_png_rgb((root / rel).string(), s.pixels);
    json obj;
    obj["path"] = rel;
    obj["label"] = *s.label;
    obj["split"] = static_cast<std::int64_t>(i) < train_count ? "train" : "test";
    manifest << obj.dump() << "\n";
  }
  manifest.close();

  std::ofstream classes(root / "classes.json");
  classes << json(synth_class_names(spec.class_count)).dump(2) << "\n";

  return (root / "manifest.jsonl").string();
}

}  // namespace pano
