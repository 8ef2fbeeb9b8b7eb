#pragma once

#include <cmath>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "pano/graph.hpp"
#include "pano/profile.hpp"
#include "pano/rng.hpp"
#include "pano/tensor.hpp"

namespace pano {

/// Owns every trainable tensor in declaration order; that order is the
/// checkpoint blob order and the optimizer state alignment, so blocks must
/// always be declared in the same sequence (see ModelParams).
template <typename S>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<S> value;
    int fan_in = 0;  // 0 => zero-init (biases)
  };

  Tensor<S>* add(std::string name, std::vector<int> shape, int fan_in) {
    entries_.push_back(Entry{std::move(name), Tensor<S>(std::move(shape)), fan_in});
    return &entries_.back().value;
  }

  std::size_t entry_count() const { return entries_.size(); }
  Entry& entry(std::size_t i) { return entries_[i]; }
  const Entry& entry(std::size_t i) const { return entries_[i]; }

  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  /// He-uniform for weights (bound sqrt(6/fan_in)), zeros for biases.
  void init_random(std::uint64_t seed) {
    Rng rng(seed);
    for (auto& e : entries_) {
      if (e.fan_in <= 0) {
        e.value.array().setZero();
        continue;
      }
      const double bound = std::sqrt(6.0 / e.fan_in);
      for (std::int64_t i = 0; i < e.value.size(); ++i)
        e.value[i] = static_cast<S>(uniform_range(rng, -bound, bound));
    }
  }

  void zero_all() {
    for (auto& e : entries_) e.value.array().setZero();
  }

 private:
  std::deque<Entry> entries_;  // deque: pointers stay valid as blocks register
};

// ---------------------------------------------------------------------------
// layer helpers
// ---------------------------------------------------------------------------

template <typename S>
struct Conv3 {
  Tensor<S>*w = nullptr, *b = nullptr;
  Conv3() = default;
  Conv3(ParamStore<S>& ps, const std::string& name, int cin, int cout)
      : w(ps.add(name + ".w", {3, 3, cin, cout}, 9 * cin)), b(ps.add(name + ".b", {cout}, 0)) {}
  Var<S> operator()(Graph<S>& g, Var<S> x) const { return conv3x3(g, x, g.parameter(w), g.parameter(b)); }
};

template <typename S>
struct Conv1 {
  Tensor<S>*w = nullptr, *b = nullptr;
  Conv1() = default;
  Conv1(ParamStore<S>& ps, const std::string& name, int cin, int cout)
      : w(ps.add(name + ".w", {cin, cout}, cin)), b(ps.add(name + ".b", {cout}, 0)) {}
  Var<S> operator()(Graph<S>& g, Var<S> x) const { return conv1x1(g, x, g.parameter(w), g.parameter(b)); }
};

template <typename S>
struct TConv {
  Tensor<S>*w = nullptr, *b = nullptr;
  TConv() = default;
  TConv(ParamStore<S>& ps, const std::string& name, int cin, int cout)
      : w(ps.add(name + ".w", {cin, 2, 2, cout}, cin)), b(ps.add(name + ".b", {cout}, 0)) {}
  Var<S> operator()(Graph<S>& g, Var<S> x) const { return tconv2x(g, x, g.parameter(w), g.parameter(b)); }
};

template <typename S>
struct Fc {
  Tensor<S>*w = nullptr, *b = nullptr;
  Fc() = default;
  Fc(ParamStore<S>& ps, const std::string& name, int in, int out)
      : w(ps.add(name + ".w", {in, out}, in)), b(ps.add(name + ".b", {out}, 0)) {}
  Var<S> operator()(Graph<S>& g, Var<S> x) const { return fully_connected(g, x, g.parameter(w), g.parameter(b)); }
};

// ---------------------------------------------------------------------------
// network blocks
// ---------------------------------------------------------------------------

/// U-Net-style glimpse super-resolver. Input is the canvas plus two indicator
/// channels; output is the full-resolution reconstruction and the bottleneck
/// features handed to the memories.
template <typename S>
struct LocalReconNet {
  Conv3<S> enc1a, enc1b, enc2a, enc2b, enc3a, enc3b;
  TConv<S> up3, up2, up1;
  Conv3<S> dec3a, dec3b, dec2a, dec2b, dec1a, dec1b;
  Conv1<S> head;

  LocalReconNet() = default;
  LocalReconNet(ParamStore<S>& ps, const Profile& p)
      : enc1a(ps, "local.enc1a", 5, p.enc1),
        enc1b(ps, "local.enc1b", p.enc1, p.enc1),
        enc2a(ps, "local.enc2a", p.enc1, p.enc2),
        enc2b(ps, "local.enc2b", p.enc2, p.enc2),
        enc3a(ps, "local.enc3a", p.enc2, p.enc3),
        enc3b(ps, "local.enc3b", p.enc3, p.enc3),
        up3(ps, "local.up3", p.enc3, p.enc3),
        up2(ps, "local.up2", p.enc3, p.enc2),
        up1(ps, "local.up1", p.enc2, p.enc1),
        dec3a(ps, "local.dec3a", 2 * p.enc3, p.enc3),
        dec3b(ps, "local.dec3b", p.enc3, p.enc3),
        dec2a(ps, "local.dec2a", 2 * p.enc2, p.enc2),
        dec2b(ps, "local.dec2b", p.enc2, p.enc2),
        dec1a(ps, "local.dec1a", 2 * p.enc1, p.enc1),
        dec1b(ps, "local.dec1b", p.enc1, p.enc1),
        head(ps, "local.head", p.enc1, 3) {}

  struct Out {
    Var<S> recon;       // (canvas, canvas, 3) in (0,1)
    Var<S> bottleneck;  // (canvas/8, canvas/8, enc3)
  };

  Out forward(Graph<S>& g, Var<S> input) const {
    auto e1 = relu(g, enc1b(g, relu(g, enc1a(g, input))));
    auto e2 = relu(g, enc2b(g, relu(g, enc2a(g, avgpool2(g, e1)))));
    auto e3 = relu(g, enc3b(g, relu(g, enc3a(g, avgpool2(g, e2)))));
    auto bottleneck = avgpool2(g, e3);
    auto d3 = relu(g, dec3b(g, relu(g, dec3a(g, concat_channels(g, up3(g, bottleneck), e3)))));
    auto d2 = relu(g, dec2b(g, relu(g, dec2a(g, concat_channels(g, up2(g, d3), e2)))));
    auto d1 = relu(g, dec1b(g, relu(g, dec1a(g, concat_channels(g, up1(g, d2), e1)))));
    return Out{sigmoid(g, head(g, d1)), bottleneck};
  }
};

/// Bottleneck -> per-glimpse descriptor: 1x1 conv, adaptive average pool,
/// flatten. Also instantiated with separate weights as the classification
/// feature extractor.
template <typename S>
struct DescriptorNet {
  Conv1<S> squeeze;
  int pool = 0, length = 0;

  DescriptorNet() = default;
  DescriptorNet(ParamStore<S>& ps, const std::string& name, const Profile& p)
      : squeeze(ps, name + ".squeeze", p.enc3, p.desc_channels),
        pool(p.desc_pool),
        length(p.descriptor_length()) {}

  Var<S> forward(Graph<S>& g, Var<S> bottleneck) const {
    auto pooled = adaptive_avgpool(g, squeeze(g, bottleneck), pool, pool);
    return reshape(g, pooled, {length});
  }
};

/// Fit-in feature vector -> coarse panorama estimate.
template <typename S>
struct BackgroundNet {
  Fc<S> fc1, fc2;
  int out_h = 0, out_w = 0;

  BackgroundNet() = default;
  BackgroundNet(ParamStore<S>& ps, const Profile& p)
      : fc1(ps, "background.fc1", p.vector_length(), p.bg_hidden),
        fc2(ps, "background.fc2", p.bg_hidden, p.background_h() * p.background_w() * 3),
        out_h(p.background_h()),
        out_w(p.background_w()) {}

  Var<S> forward(Graph<S>& g, Var<S> vec) const {
    auto h = relu(g, fc1(g, vec));
    return reshape(g, sigmoid(g, fc2(g, h)), {out_h, out_w, 3});
  }
};

/// Multi-scale decoder with fit-in-matrix skip connections. Stage 1 works at
/// the background scale; stages 2-4 upscale 2x each. Every stage concatenates
/// the matrix view (RGB + occupancy fraction) at its scale and emits that
/// scale's reconstruction through a 1x1 conv + sigmoid.
template <typename S>
struct UpsamplerNet {
  Conv3<S> s1a, s1b, s2a, s2b, s3a, s3b, s4a, s4b;
  TConv<S> up2, up3, up4;
  Conv1<S> emit1, emit2, emit3, emit4;

  UpsamplerNet() = default;
  UpsamplerNet(ParamStore<S>& ps, const Profile& p)
      : s1a(ps, "upsampler.s1a", 3 + 4, p.ups[0]),
        s1b(ps, "upsampler.s1b", p.ups[0], p.ups[0]),
        s2a(ps, "upsampler.s2a", p.ups[1] + 4, p.ups[1]),
        s2b(ps, "upsampler.s2b", p.ups[1], p.ups[1]),
        s3a(ps, "upsampler.s3a", p.ups[2] + 4, p.ups[2]),
        s3b(ps, "upsampler.s3b", p.ups[2], p.ups[2]),
        s4a(ps, "upsampler.s4a", p.ups[3] + 4, p.ups[3]),
        s4b(ps, "upsampler.s4b", p.ups[3], p.ups[3]),
        up2(ps, "upsampler.up2", p.ups[0], p.ups[1]),
        up3(ps, "upsampler.up3", p.ups[1], p.ups[2]),
        up4(ps, "upsampler.up4", p.ups[2], p.ups[3]),
        emit1(ps, "upsampler.emit1", p.ups[0], 3),
        emit2(ps, "upsampler.emit2", p.ups[1], 3),
        emit3(ps, "upsampler.emit3", p.ups[2], 3),
        emit4(ps, "upsampler.emit4", p.ups[3], 3) {}

  /// views[k] is the 4-channel matrix view at scale k (coarse to fine).
  std::array<Var<S>, 4> forward(Graph<S>& g, Var<S> background, const std::array<Var<S>, 4>& views) const {
    auto f1 = relu(g, s1b(g, relu(g, s1a(g, concat_channels(g, background, views[0])))));
    auto f2 = relu(g, s2b(g, relu(g, s2a(g, concat_channels(g, up2(g, f1), views[1])))));
    auto f3 = relu(g, s3b(g, relu(g, s3a(g, concat_channels(g, up3(g, f2), views[2])))));
    auto f4 = relu(g, s4b(g, relu(g, s4a(g, concat_channels(g, up4(g, f3), views[3])))));
    return {sigmoid(g, emit1(g, f1)), sigmoid(g, emit2(g, f2)), sigmoid(g, emit3(g, f3)),
            sigmoid(g, emit4(g, f4))};
  }
};

/// Fit-in feature vector -> per-patch logits.
template <typename S>
struct AttentionHead {
  Fc<S> fc1, fc2;

  AttentionHead() = default;
  AttentionHead(ParamStore<S>& ps, const Profile& p)
      : fc1(ps, "attention.fc1", p.vector_length(), p.att_hidden),
        fc2(ps, "attention.fc2", p.att_hidden, p.geometry().patch_count()) {}

  Var<S> forward(Graph<S>& g, Var<S> vec) const { return fc2(g, relu(g, fc1(g, vec))); }
};

/// Deep 3x3-conv image classifier (stacked conv pairs with 2x pooling, global
/// average pool, linear head). Instantiated twice with independent weights:
/// once over reconstructions, once over raw panoramas as the upper bound.
template <typename S>
struct ClassifierBackbone {
  Conv3<S> c1a, c1b, c2a, c2b, c3a, c3b, c4a, c4b;
  Fc<S> head;

  ClassifierBackbone() = default;
  ClassifierBackbone(ParamStore<S>& ps, const std::string& name, const Profile& p)
      : c1a(ps, name + ".c1a", 3, p.cls[0]),
        c1b(ps, name + ".c1b", p.cls[0], p.cls[0]),
        c2a(ps, name + ".c2a", p.cls[0], p.cls[1]),
        c2b(ps, name + ".c2b", p.cls[1], p.cls[1]),
        c3a(ps, name + ".c3a", p.cls[1], p.cls[2]),
        c3b(ps, name + ".c3b", p.cls[2], p.cls[2]),
        c4a(ps, name + ".c4a", p.cls[2], p.cls[3]),
        c4b(ps, name + ".c4b", p.cls[3], p.cls[3]),
        head(ps, name + ".head", p.cls[3], p.class_count) {}

  Var<S> forward(Graph<S>& g, Var<S> image) const {
    auto f1 = avgpool2(g, relu(g, c1b(g, relu(g, c1a(g, image)))));
    auto f2 = avgpool2(g, relu(g, c2b(g, relu(g, c2a(g, f1)))));
    auto f3 = avgpool2(g, relu(g, c3b(g, relu(g, c3a(g, f2)))));
    auto f4 = avgpool2(g, relu(g, c4b(g, relu(g, c4a(g, f3)))));
    return head(g, global_avgpool(g, f4));
  }
};

/// Fit-in classification vector -> class logits.
template <typename S>
struct VectorClassifier {
  Fc<S> fc1, fc2;

  VectorClassifier() = default;
  VectorClassifier(ParamStore<S>& ps, const Profile& p)
      : fc1(ps, "vector_cls.fc1", p.vector_length(), p.vec_cls_hidden),
        fc2(ps, "vector_cls.fc2", p.vec_cls_hidden, p.class_count) {}

  Var<S> forward(Graph<S>& g, Var<S> vec) const { return fc2(g, relu(g, fc1(g, vec))); }
};

/// Per-block parameter counts, frozen by tests to pin the architecture.
struct BlockSizes {
  std::int64_t local = 0, descriptor = 0, background = 0, upsampler = 0, attention = 0;
  std::int64_t recon_classifier = 0, upper_classifier = 0, class_extractor = 0, vector_classifier = 0;
  std::int64_t total() const {
    return local + descriptor + background + upsampler + attention + recon_classifier + upper_classifier +
           class_extractor + vector_classifier;
  }
};

/// The whole trainable model. Declaration order here defines the checkpoint
/// layout; do not reorder blocks.
template <typename S>
struct ModelParams {
  Profile profile;
  ParamStore<S> store;
  LocalReconNet<S> local;
  DescriptorNet<S> descriptor;
  BackgroundNet<S> background;
  UpsamplerNet<S> upsampler;
  AttentionHead<S> attention;
  ClassifierBackbone<S> recon_classifier;
  ClassifierBackbone<S> upper_classifier;
  DescriptorNet<S> class_extractor;
  VectorClassifier<S> vector_classifier;
  BlockSizes sizes;

  explicit ModelParams(Profile p) : profile(std::move(p)) {
    profile.validate();
    std::int64_t mark = 0;
    const auto take = [&](std::int64_t& slot) {
      slot = store.parameter_count() - mark;
      mark = store.parameter_count();
    };
    local = LocalReconNet<S>(store, profile);
    take(sizes.local);
    descriptor = DescriptorNet<S>(store, "descriptor", profile);
    take(sizes.descriptor);
    background = BackgroundNet<S>(store, profile);
    take(sizes.background);
    upsampler = UpsamplerNet<S>(store, profile);
    take(sizes.upsampler);
    attention = AttentionHead<S>(store, profile);
    take(sizes.attention);
    recon_classifier = ClassifierBackbone<S>(store, "recon_cls", profile);
    take(sizes.recon_classifier);
    upper_classifier = ClassifierBackbone<S>(store, "upper_cls", profile);
    take(sizes.upper_classifier);
    class_extractor = DescriptorNet<S>(store, "class_extractor", profile);
    take(sizes.class_extractor);
    vector_classifier = VectorClassifier<S>(store, profile);
    take(sizes.vector_classifier);
  }

  ModelParams(const ModelParams&) = delete;
  ModelParams& operator=(const ModelParams&) = delete;
};

}  // namespace pano
