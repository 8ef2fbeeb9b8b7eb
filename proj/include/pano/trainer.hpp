#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pano/adam.hpp"
#include "pano/dataset.hpp"
#include "pano/geometry.hpp"
#include "pano/glimpse.hpp"
#include "pano/graph.hpp"
#include "pano/imageops.hpp"
#include "pano/memory.hpp"
#include "pano/nets.hpp"
#include "pano/rng.hpp"

namespace pano {

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

template <typename S>
struct LossBreakdown {
  std::vector<S> local;       // one entry per time-step
  std::array<S, 4> scales{};  // one entry per scale, coarse to fine
  S attention = 0;
  std::optional<S> classification;
};

/// Unweighted sum of every present component.
template <typename S>
S total_loss(const LossBreakdown<S>& b) {
  S total = 0;
  for (S v : b.local) total += v;
  for (S v : b.scales) total += v;
  total += b.attention;
  if (b.classification) total += *b.classification;
  return total;
}

/// Mean absolute difference over mask-true pixels and channels (0 on empty
/// mask). Plain-value twin of the in-graph l1_loss.
template <typename S>
S local_loss_value(const Tensor<S>& recon, const Tensor<S>& gt, const Tensor<std::uint8_t>& mask) {
  if (!recon.same_shape(gt)) throw std::invalid_argument("local_loss: shape mismatch");
  const int ch = recon.dim(2);
  if (mask.size() * ch != recon.size()) throw std::invalid_argument("local_loss: mask shape mismatch");
  S acc = 0;
  std::int64_t count = 0;
  for (std::int64_t p = 0; p < mask.size(); ++p) {
    if (!mask[p]) continue;
    count += ch;
    for (int c = 0; c < ch; ++c) acc += std::abs(recon[p * ch + c] - gt[p * ch + c]);
  }
  return count ? acc / static_cast<S>(count) : S(0);
}

/// Per-scale mean absolute error against area-averaged panorama targets.
template <typename S>
std::array<S, 4> scale_losses_value(const std::array<Tensor<S>, 4>& recons, const Tensor<S>& panorama) {
  std::array<S, 4> out{};
  for (int k = 0; k < 4; ++k) {
    const Tensor<S> target = downscale_area(panorama, recons[k].dim(0), recons[k].dim(1));
    if (!target.same_shape(recons[k])) throw std::invalid_argument("scale_losses: shape mismatch");
    out[k] = (recons[k].array() - target.array()).abs().mean();
  }
  return out;
}

// ---------------------------------------------------------------------------
// attention supervision
// ---------------------------------------------------------------------------

struct AttentionTarget {
  int label = 0;                     // argmax patch id, lowest id on ties
  std::vector<double> distribution;  // per-patch error / total error
};

/// Per-patch error = sum of absolute differences over the patch's pixels and
/// channels; distribution normalizes by the total (uniform when total is 0).
template <typename S>
AttentionTarget attention_target(const Tensor<S>& recon, const Tensor<S>& panorama, const GridGeometry& g) {
  if (!recon.same_shape(panorama)) throw std::invalid_argument("attention_target: shape mismatch");
  const int P = g.patch_count();
  AttentionTarget t;
  t.distribution.assign(static_cast<size_t>(P), 0.0);
  double total = 0;
  for (int p = 0; p < P; ++p) {
    const BlockIndex b = block_of(g, p);
    double err = 0;
    for (int y = b.row * g.block; y < (b.row + 1) * g.block; ++y)
      for (int x = b.col * g.block; x < (b.col + 1) * g.block; ++x)
        for (int c = 0; c < 3; ++c) err += std::abs(static_cast<double>(recon(y, x, c)) - panorama(y, x, c));
    t.distribution[static_cast<size_t>(p)] = err;
    total += err;
  }
  if (total > 0) {
    for (auto& v : t.distribution) v /= total;
  } else {
    std::fill(t.distribution.begin(), t.distribution.end(), 1.0 / P);
  }
  t.label = 0;
  for (int p = 1; p < P; ++p)
    if (t.distribution[static_cast<size_t>(p)] > t.distribution[static_cast<size_t>(t.label)]) t.label = p;
  return t;
}

/// -log softmax(logits)[label], plain values.
template <typename S>
double attention_loss_value(const Tensor<S>& logits, int label) {
  const double m = static_cast<double>(logits.array().maxCoeff());
  double sum = 0;
  for (std::int64_t i = 0; i < logits.size(); ++i) sum += std::exp(static_cast<double>(logits[i]) - m);
  return m + std::log(sum) - static_cast<double>(logits[label]);
}

// ---------------------------------------------------------------------------
// glimpse location selection
// ---------------------------------------------------------------------------

enum class RolloutMode { Train, Eval };

/// Choose the next patch from attention logits. Visited patches are excluded;
/// Train samples the renormalized multinomial, Eval takes the masked argmax
/// (lowest id on ties). Throws when every patch is visited.
template <typename S>
int select_next(const Tensor<S>& logits, const std::vector<std::uint8_t>& visited, RolloutMode mode, Rng& rng) {
  const auto n = static_cast<int>(logits.size());
  if (static_cast<int>(visited.size()) != n) throw std::invalid_argument("select_next: visited size mismatch");
  auto probs = softmax_values(logits);
  double mass = 0;
  int candidates = 0;
  for (int i = 0; i < n; ++i) {
    if (visited[static_cast<size_t>(i)]) {
      probs[static_cast<size_t>(i)] = 0;
    } else {
      mass += probs[static_cast<size_t>(i)];
      ++candidates;
    }
  }
  if (candidates == 0) throw std::runtime_error("select_next: all patches visited");
  if (mode == RolloutMode::Eval) {
    int best = -1;
    for (int i = 0; i < n; ++i) {
      if (visited[static_cast<size_t>(i)]) continue;
      if (best < 0 || probs[static_cast<size_t>(i)] > probs[static_cast<size_t>(best)]) best = i;
    }
    return best;
  }
  const double u = uniform_real(rng) * mass;
  double acc = 0;
  int last = -1;
  for (int i = 0; i < n; ++i) {
    if (visited[static_cast<size_t>(i)]) continue;
    last = i;
    acc += probs[static_cast<size_t>(i)];
    if (u < acc) return i;
  }
  return last;  // numerical tail
}

// ---------------------------------------------------------------------------
// episode rollout
// ---------------------------------------------------------------------------

enum class ClassificationMode { Off, FromRecon, FromVector };

/// Everything a policy may look at when choosing the next glimpse.
template <typename S>
struct PolicyContext {
  const GridGeometry* geom = nullptr;
  const std::vector<std::uint8_t>* visited = nullptr;
  const Tensor<S>* attention_logits = nullptr;  // current step's head output
  const Tensor<S>* current_recon = nullptr;     // full-scale reconstruction
  const Tensor<S>* panorama = nullptr;          // ground truth (oracle policies)
  BlockIndex current_center;
  RolloutMode mode = RolloutMode::Eval;
  Rng* rng = nullptr;
};

template <typename S>
using PolicyFn = std::function<int(const PolicyContext<S>&)>;

struct EpisodeConfig {
  int T = 8;
  RolloutMode mode = RolloutMode::Eval;
  ClassificationMode classification = ClassificationMode::Off;
  std::uint64_t seed = 0;
  bool attention_distribution_loss = false;
  // test hooks for the loss-schedule probes; never set in production paths
  bool attach_intermediate_scale_losses = false;
  bool skip_intermediate_full_recon = false;
};

/// Time-step state: visited set, both memories, rng stream.
template <typename S>
struct EpisodeState {
  int t = 0;
  std::vector<std::uint8_t> visited;
  std::vector<int> order;  // visit order
  FitInMatrix<S> matrix;
  FitInFeatureVector<S> vector;
  std::optional<FitInFeatureVector<S>> class_vector;
  Rng rng;
};

template <typename S>
struct EpisodeResult {
  std::vector<int> trajectory;
  std::vector<Tensor<S>> step_recons;                 // full-scale, one per step
  std::vector<std::vector<double>> step_attention;    // softmax of the head, one per step
  LossBreakdown<S> losses;
  AttentionTarget final_target;
  typename Graph<S>::Var total;                       // scalar loss node in the caller's graph
  Tensor<S> class_logits;                             // filled when classification is active
  EpisodeState<S> state;                              // final memories
};

/// Roll one exploration episode on a single panorama. The graph outlives the
/// result so the caller can run backward on result.total. The first center is
/// drawn uniformly from all patches; later centers come from the policy (or
/// the built-in learned policy when none is given). Losses follow the
/// schedule: local every step, scales and attention after the last step only.
template <typename S>
EpisodeResult<S> run_episode(Graph<S>& g, const ModelParams<S>& model, const Tensor<S>& panorama,
                             std::optional<int> label, const EpisodeConfig& cfg,
                             const PolicyFn<S>* policy = nullptr) {
  const GridGeometry geom = model.profile.geometry();
  if (panorama.dim(0) != geom.image_h || panorama.dim(1) != geom.image_w)
    throw std::invalid_argument("run_episode: panorama does not match profile resolution");
  if (cfg.T < 1 || cfg.T > geom.patch_count()) throw std::invalid_argument("run_episode: bad horizon T");
  if (cfg.classification != ClassificationMode::Off && !label)
    throw std::invalid_argument("run_episode: classification requires a label");

  const auto scales = model.profile.scales();

  EpisodeResult<S> out;
  EpisodeState<S>& st = out.state;
  st.visited.assign(static_cast<size_t>(geom.patch_count()), 0);
  st.matrix = FitInMatrix<S>::fresh(geom);
  st.vector = FitInFeatureVector<S>::fresh(geom, model.profile.descriptor_length());
  if (cfg.classification == ClassificationMode::FromVector)
    st.class_vector = FitInFeatureVector<S>::fresh(geom, model.profile.descriptor_length());
  st.rng = Rng(cfg.seed);

  auto matrix_var = g.constant(Tensor<S>({geom.image_h, geom.image_w, 3}));
  auto vector_var = g.constant(Tensor<S>({model.profile.vector_length()}));
  auto class_vector_var = vector_var;

  BlockIndex center = block_of(geom, static_cast<int>(uniform_int(st.rng, 0, geom.patch_count() - 1)));

  std::vector<typename Graph<S>::Var> loss_terms;
  typename Graph<S>::Var attention_logits_var{};
  std::array<typename Graph<S>::Var, 4> final_recons{};

  for (int t = 1; t <= cfg.T; ++t) {
    const int pid = patch_index(geom, center);
    st.visited[static_cast<size_t>(pid)] = 1;
    st.order.push_back(pid);
    out.trajectory.push_back(pid);
    st.t = t;

    // sense + local reconstruction
    const auto glimpse = extract_retina(panorama, geom, center);
    auto input = g.constant(glimpse_net_input(glimpse));
    const auto local_out = model.local.forward(g, input);
    auto [gt, mask] = ground_truth_crop(panorama, geom, center);
    auto local_l = l1_loss(g, local_out.recon, gt, &mask);
    out.losses.local.push_back(g.value(local_l)[0]);
    loss_terms.push_back(local_l);

    // paste into the fit-in matrix (graph + mirror bookkeeping)
    auto pairs = std::make_shared<const std::vector<std::pair<int, int>>>(footprint_pixel_pairs(geom, center));
    matrix_var = paste(g, matrix_var, local_out.recon, pairs);
    matrix_write(st.matrix, g.value(local_out.recon), geom, center, mask);

    // descriptor into the fit-in feature vector
    auto desc = model.descriptor.forward(g, local_out.bottleneck);
    const int slot = slot_of(geom, center);
    vector_var = slot_write(g, vector_var, desc, slot);
    vector_write(st.vector, g.value(desc), geom, center);

    if (cfg.classification == ClassificationMode::FromVector) {
      auto cdesc = model.class_extractor.forward(g, local_out.bottleneck);
      class_vector_var = (t == 1) ? slot_write(g, g.constant(Tensor<S>({model.profile.vector_length()})), cdesc, slot)
                                  : slot_write(g, class_vector_var, cdesc, slot);
      vector_write(*st.class_vector, g.value(cdesc), geom, center);
    }

    // attention head runs every step; only the last step is supervised
    attention_logits_var = model.attention.forward(g, vector_var);
    out.step_attention.push_back(softmax_values(g.value(attention_logits_var)));

    // full reconstruction at all scales
    const bool need_full = !cfg.skip_intermediate_full_recon || t == cfg.T;
    if (need_full) {
      auto bg = model.background.forward(g, vector_var);
      std::array<typename Graph<S>::Var, 4> views{};
      Tensor<S> occ({geom.image_h, geom.image_w});
      for (std::int64_t i = 0; i < occ.size(); ++i) occ[i] = static_cast<S>(st.matrix.occupancy[i]);
      for (int k = 0; k < 4; ++k) {
        auto data_k = avgpool_to(g, matrix_var, scales[static_cast<size_t>(k)].first, scales[static_cast<size_t>(k)].second);
        Tensor<S> occ_k = downscale_area(occ, scales[static_cast<size_t>(k)].first, scales[static_cast<size_t>(k)].second);
        views[static_cast<size_t>(k)] =
            concat_channels(g, data_k, g.constant(occ_k.reshaped({occ_k.dim(0), occ_k.dim(1), 1})));
      }
      const auto recons = model.upsampler.forward(g, bg, views);
      out.step_recons.push_back(Tensor<S>(g.value(recons[3])));
      if (t == cfg.T) final_recons = recons;
      if (t == cfg.T || cfg.attach_intermediate_scale_losses) {
        for (int k = 0; k < 4; ++k) {
          const Tensor<S> target = downscale_area(panorama, g.value(recons[static_cast<size_t>(k)]).dim(0),
                                                  g.value(recons[static_cast<size_t>(k)]).dim(1));
          auto sl = l1_loss(g, recons[static_cast<size_t>(k)], target);
          if (t == cfg.T) out.losses.scales[static_cast<size_t>(k)] = g.value(sl)[0];
          loss_terms.push_back(sl);
        }
      }
    }

    // choose where to look next
    if (t < cfg.T) {
      int next;
      if (policy) {
        PolicyContext<S> ctx;
        ctx.geom = &geom;
        ctx.visited = &st.visited;
        ctx.attention_logits = &g.value(attention_logits_var);
        ctx.current_recon = out.step_recons.empty() ? nullptr : &out.step_recons.back();
        ctx.panorama = &panorama;
        ctx.current_center = center;
        ctx.mode = cfg.mode;
        ctx.rng = &st.rng;
        next = (*policy)(ctx);
        if (next < 0 || next >= geom.patch_count() || st.visited[static_cast<size_t>(next)])
          throw std::runtime_error("run_episode: policy returned an invalid or visited patch");
      } else {
        next = select_next(g.value(attention_logits_var), st.visited, cfg.mode, st.rng);
      }
      center = block_of(geom, next);
    }
  }

  // last-step supervision: attention target from the final error map
  out.final_target = attention_target(out.step_recons.back(), panorama, geom);
  auto att_l = cfg.attention_distribution_loss
                   ? softmax_cross_entropy_dist(g, attention_logits_var, out.final_target.distribution)
                   : softmax_cross_entropy(g, attention_logits_var, out.final_target.label);
  out.losses.attention = g.value(att_l)[0];
  loss_terms.push_back(att_l);

  if (cfg.classification == ClassificationMode::FromRecon) {
    auto logits = model.recon_classifier.forward(g, final_recons[3]);
    auto cls_l = softmax_cross_entropy(g, logits, *label);
    out.losses.classification = g.value(cls_l)[0];
    out.class_logits = Tensor<S>(g.value(logits));
    loss_terms.push_back(cls_l);
  } else if (cfg.classification == ClassificationMode::FromVector) {
    auto logits = model.vector_classifier.forward(g, class_vector_var);
    auto cls_l = softmax_cross_entropy(g, logits, *label);
    out.losses.classification = g.value(cls_l)[0];
    out.class_logits = Tensor<S>(g.value(logits));
    loss_terms.push_back(cls_l);
  }

  out.total = sum_scalars(g, loss_terms);
  return out;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct TrainConfig {
  int T = 8;
  int batch_size = 16;
  int epochs = 1;
  AdamConfig adam;
  std::uint64_t seed = 0;
  ClassificationMode classification = ClassificationMode::Off;
  bool attention_distribution_loss = false;
  int threads = 1;
  int checkpoint_every = 0;  // optimizer steps; 0 = final only
};

struct MetricsRow {
  std::int64_t iteration = 0;
  int epoch = 0;
  double local_mean = 0;
  std::array<double, 4> scales{};
  double attention = 0;
  std::optional<double> classification;
  double total = 0;
};

struct TrainResult {
  std::int64_t iterations = 0;
  std::vector<MetricsRow> metrics;
};

/// One epoch-shuffled pass per epoch; per-example wrap augmentation and
/// train-mode sampling; gradients averaged over the batch in index order so
/// runs are reproducible for a fixed thread count.
template <typename S>
TrainResult train(ModelParams<S>& model, Adam<S>& adam, const std::vector<Tensor<S>>& images,
                  const std::vector<std::optional<int>>& labels, const TrainConfig& cfg,
                  const std::function<void(std::int64_t)>& on_checkpoint = nullptr,
                  std::int64_t start_iteration = 0) {
  if (images.empty()) throw std::invalid_argument("train: empty training split");
  if (cfg.classification != ClassificationMode::Off)
    for (const auto& l : labels)
      if (!l) throw std::invalid_argument("train: classification requires labels on every sample");

  const int W = model.profile.image_w;
  const std::size_t entry_count = model.store.entry_count();
  TrainResult result;
  result.iterations = start_iteration;

  std::vector<std::size_t> indices(images.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;

  struct EpisodeGrads {
    std::vector<Tensor<S>> grads;
    LossBreakdown<S> losses;
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // deterministic shuffle
    Rng shuffle_rng(mix_seed(cfg.seed, 0x5F0ULL + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = indices.size(); i > 1; --i)
      std::swap(indices[i - 1], indices[static_cast<std::size_t>(uniform_int(shuffle_rng, 0, static_cast<std::int64_t>(i) - 1))]);

    std::size_t cursor = 0;
    std::int64_t example_counter = 0;
    while (cursor < indices.size()) {
      const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), indices.size() - cursor);
      std::vector<EpisodeGrads> slots(batch);

      const auto roll_one = [&](std::size_t slot_idx) {
        const std::size_t img_idx = indices[cursor + slot_idx];
        const std::uint64_t ep_seed =
            mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(example_counter + static_cast<std::int64_t>(slot_idx)));
        Rng aug_rng(mix_seed(ep_seed, 0xA46));
        const int offset = static_cast<int>(uniform_int(aug_rng, 0, W - 1));
        const Tensor<S> pan = wrap_columns(images[img_idx], offset);

        EpisodeConfig ecfg;
        ecfg.T = cfg.T;
        ecfg.mode = RolloutMode::Train;
        ecfg.classification = cfg.classification;
        ecfg.seed = ep_seed;
        ecfg.attention_distribution_loss = cfg.attention_distribution_loss;

        Graph<S> g;
        auto ep = run_episode(g, model, pan, labels[img_idx], ecfg);
        g.backward(ep.total);

        auto& out = slots[slot_idx];
        out.losses = ep.losses;
        out.grads.resize(entry_count);
        for (std::size_t e = 0; e < entry_count; ++e) {
          const Tensor<S>* grad = g.gradient_of(&model.store.entry(e).value);
          if (grad) out.grads[e] = *grad;
        }
      };

      const int workers = std::max(1, std::min<int>(cfg.threads, static_cast<int>(batch)));
      if (workers == 1) {
        for (std::size_t i = 0; i < batch; ++i) roll_one(i);
      } else {
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next_slot{0};
        for (int w = 0; w < workers; ++w)
          pool.emplace_back([&] {
            for (std::size_t i = next_slot.fetch_add(1); i < batch; i = next_slot.fetch_add(1)) roll_one(i);
          });
        for (auto& th : pool) th.join();
      }

      // batch-mean gradients, accumulated in slot order
      std::vector<Tensor<S>> grads(entry_count);
      const S inv_batch = S(1) / static_cast<S>(batch);
      for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t e = 0; e < entry_count; ++e) {
          if (slots[i].grads[e].empty()) continue;
          if (grads[e].empty()) grads[e] = Tensor<S>(slots[i].grads[e].shape());
          grads[e].array() += slots[i].grads[e].array() * inv_batch;
        }

      // batch-mean loss breakdown
      MetricsRow row;
      row.epoch = epoch;
      double local_sum = 0;
      std::int64_t local_n = 0;
      bool any_class = false;
      double class_sum = 0;
      for (const auto& slot : slots) {
        for (S v : slot.losses.local) {
          local_sum += static_cast<double>(v);
          ++local_n;
        }
        for (int k = 0; k < 4; ++k) row.scales[static_cast<size_t>(k)] += static_cast<double>(slot.losses.scales[static_cast<size_t>(k)]) / batch;
        row.attention += static_cast<double>(slot.losses.attention) / batch;
        if (slot.losses.classification) {
          any_class = true;
          class_sum += static_cast<double>(*slot.losses.classification) / batch;
        }
        row.total += static_cast<double>(total_loss(slot.losses)) / batch;
      }
      row.local_mean = local_n ? local_sum / static_cast<double>(local_n) : 0.0;
      if (any_class) row.classification = class_sum;

      if (!std::isfinite(row.total)) {
        std::ostringstream os;
        os << "train: non-finite total loss at iteration " << (result.iterations + 1) << " (epoch " << epoch
           << "): local_mean=" << row.local_mean << " attention=" << row.attention;
        throw std::runtime_error(os.str());
      }

      adam.step(grads);
      ++result.iterations;
      row.iteration = result.iterations;
      result.metrics.push_back(row);

      if (on_checkpoint && cfg.checkpoint_every > 0 && result.iterations % cfg.checkpoint_every == 0)
        on_checkpoint(result.iterations);

      cursor += batch;
      example_counter += static_cast<std::int64_t>(batch);
    }
  }
  return result;
}

}  // namespace pano
