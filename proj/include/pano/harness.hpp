#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "pano/trainer.hpp"

namespace pano {

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

/// Mean squared error over all pixels and channels, reported in (0-1)x1000.
template <typename S>
double mse_metric(const Tensor<S>& recon, const Tensor<S>& panorama) {
  if (!recon.same_shape(panorama)) throw std::invalid_argument("mse_metric: shape mismatch");
  double acc = 0;
  for (std::int64_t i = 0; i < recon.size(); ++i) {
    const double d = static_cast<double>(recon[i]) - panorama[i];
    acc += d * d;
  }
  return acc / static_cast<double>(recon.size()) * 1000.0;
}

/// Root mean squared error in the 0-255 range. Always equals
/// 255*sqrt(mse_metric/1000) by construction.
template <typename S>
double rmse_metric(const Tensor<S>& recon, const Tensor<S>& panorama) {
  return 255.0 * std::sqrt(mse_metric(recon, panorama) / 1000.0);
}

// ---------------------------------------------------------------------------
// policies
// ---------------------------------------------------------------------------

enum class PolicyKind { Learned, Random, MiddleRowRandom, Neighborhood, GtErrorOracle };

inline const char* policy_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::Learned: return "learned";
    case PolicyKind::Random: return "random";
    case PolicyKind::MiddleRowRandom: return "middle-random";
    case PolicyKind::Neighborhood: return "neighborhood";
    case PolicyKind::GtErrorOracle: return "gt-oracle";
  }
  return "?";
}

inline PolicyKind policy_by_name(const std::string& name) {
  for (PolicyKind k : {PolicyKind::Learned, PolicyKind::Random, PolicyKind::MiddleRowRandom,
                       PolicyKind::Neighborhood, PolicyKind::GtErrorOracle})
    if (name == policy_name(k)) return k;
  throw std::invalid_argument("unknown policy '" + name + "'");
}

namespace harness_detail {

template <typename S>
int uniform_unvisited(const PolicyContext<S>& ctx) {
  std::vector<int> candidates;
  for (int p = 0; p < ctx.geom->patch_count(); ++p)
    if (!(*ctx.visited)[static_cast<size_t>(p)]) candidates.push_back(p);
  if (candidates.empty()) throw std::runtime_error("policy: all patches visited");
  return candidates[static_cast<size_t>(uniform_int(*ctx.rng, 0, static_cast<std::int64_t>(candidates.size()) - 1))];
}

}  // namespace harness_detail

/// Next glimpse location under a baseline or learned policy. Every kind's
/// action space is restricted to unvisited patches; stochastic kinds fall
/// back to uniform-unvisited when their preferred set is exhausted.
template <typename S>
int policy_next(PolicyKind kind, const PolicyContext<S>& ctx) {
  const GridGeometry& g = *ctx.geom;
  switch (kind) {
    case PolicyKind::Learned:
      return select_next(*ctx.attention_logits, *ctx.visited, ctx.mode, *ctx.rng);
    case PolicyKind::Random:
      return harness_detail::uniform_unvisited(ctx);
    case PolicyKind::MiddleRowRandom: {
      // the two central rows of the grid (rows {3,4} on the 8-row full grid)
      const int r0 = g.rows() / 2 - 1, r1 = g.rows() / 2;
      std::vector<int> candidates;
      for (int row : {r0, r1})
        for (int col = 0; col < g.cols(); ++col) {
          const int p = patch_index(g, BlockIndex{col, row});
          if (!(*ctx.visited)[static_cast<size_t>(p)]) candidates.push_back(p);
        }
      if (candidates.empty()) return harness_detail::uniform_unvisited(ctx);
      return candidates[static_cast<size_t>(uniform_int(*ctx.rng, 0, static_cast<std::int64_t>(candidates.size()) - 1))];
    }
    case PolicyKind::Neighborhood: {
      std::vector<int> candidates;
      for (const auto& cell : footprint(g, ctx.current_center)) {
        if (!cell.valid || (cell.block == ctx.current_center)) continue;
        const int p = patch_index(g, cell.block);
        if (!(*ctx.visited)[static_cast<size_t>(p)]) candidates.push_back(p);
      }
      if (candidates.empty()) return harness_detail::uniform_unvisited(ctx);
      return candidates[static_cast<size_t>(uniform_int(*ctx.rng, 0, static_cast<std::int64_t>(candidates.size()) - 1))];
    }
    case PolicyKind::GtErrorOracle: {
      if (!ctx.current_recon) return harness_detail::uniform_unvisited(ctx);
      const AttentionTarget t = attention_target(*ctx.current_recon, *ctx.panorama, g);
      int best = -1;
      for (int p = 0; p < g.patch_count(); ++p) {
        if ((*ctx.visited)[static_cast<size_t>(p)]) continue;
        if (best < 0 || t.distribution[static_cast<size_t>(p)] > t.distribution[static_cast<size_t>(best)]) best = p;
      }
      if (best < 0) throw std::runtime_error("policy: all patches visited");
      return best;
    }
  }
  throw std::logic_error("policy_next: unreachable");
}

template <typename S>
PolicyFn<S> make_policy(PolicyKind kind) {
  return [kind](const PolicyContext<S>& ctx) { return policy_next(kind, ctx); };
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

struct MetricReport {
  std::string policy;
  int steps = 0;
  std::vector<double> mse_curve;   // (0-1)x1000 per step, mean over images and seeds
  std::vector<double> rmse_curve;  // 0-255 per step, derived from the same means
  double final_mse = 0;            // (0-1)x1000
  double final_rmse = 0;           // 0-255
  std::optional<double> accuracy;
  std::int64_t sample_count = 0;
  std::vector<std::uint64_t> seeds;
};

/// Run eval-mode episodes for every (image, seed) pair and aggregate per-step
/// full-scale reconstruction error curves.
template <typename S>
MetricReport evaluate(const ModelParams<S>& model, const std::vector<Tensor<S>>& images, PolicyKind kind,
                      int T, const std::vector<std::uint64_t>& seeds, int threads = 1) {
  if (images.empty()) throw std::invalid_argument("evaluate: empty split");
  if (seeds.empty()) throw std::invalid_argument("evaluate: need at least one seed");

  const std::int64_t episodes = static_cast<std::int64_t>(images.size()) * static_cast<std::int64_t>(seeds.size());
  std::vector<std::vector<double>> per_episode(static_cast<size_t>(episodes));

  const PolicyFn<S> policy = make_policy<S>(kind);
  const auto run_one = [&](std::int64_t e) {
    const std::size_t img = static_cast<std::size_t>(e) / seeds.size();
    const std::size_t sd = static_cast<std::size_t>(e) % seeds.size();
    EpisodeConfig cfg;
    cfg.T = T;
    cfg.mode = RolloutMode::Eval;
    cfg.seed = mix_seed(seeds[sd], static_cast<std::uint64_t>(img));
    Graph<S> g;
    const auto ep = run_episode(g, model, images[img], std::nullopt, cfg, &policy);
    auto& curve = per_episode[static_cast<size_t>(e)];
    curve.reserve(static_cast<size_t>(T));
    for (const auto& recon : ep.step_recons) curve.push_back(mse_metric(recon, images[img]));
  };

  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(episodes)));
  if (workers == 1) {
    for (std::int64_t e = 0; e < episodes; ++e) run_one(e);
  } else {
    std::atomic<std::int64_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::int64_t e = next.fetch_add(1); e < episodes; e = next.fetch_add(1)) run_one(e);
      });
    for (auto& th : pool) th.join();
  }

  MetricReport report;
  report.policy = policy_name(kind);
  report.steps = T;
  report.sample_count = static_cast<std::int64_t>(images.size());
  report.seeds = seeds;
  report.mse_curve.assign(static_cast<size_t>(T), 0.0);
  for (std::int64_t e = 0; e < episodes; ++e)
    for (int t = 0; t < T; ++t) report.mse_curve[static_cast<size_t>(t)] += per_episode[static_cast<size_t>(e)][static_cast<size_t>(t)];
  for (auto& v : report.mse_curve) v /= static_cast<double>(episodes);
  report.rmse_curve.reserve(static_cast<size_t>(T));
  for (double mse : report.mse_curve) report.rmse_curve.push_back(255.0 * std::sqrt(mse / 1000.0));
  report.final_mse = report.mse_curve.back();
  report.final_rmse = report.rmse_curve.back();
  return report;
}

/// Top-1 accuracy of the configured classification setting. The upper bound
/// classifies raw panoramas directly; the transfer settings classify after T
/// eval-mode glimpses under the learned policy.
template <typename S>
double classification_accuracy(const ModelParams<S>& model, const std::vector<Tensor<S>>& images,
                               const std::vector<std::optional<int>>& labels, ClassificationMode mode, int T,
                               std::uint64_t seed, int threads = 1, bool upper_bound = false) {
  if (images.empty()) throw std::invalid_argument("classification_accuracy: empty split");
  for (const auto& l : labels)
    if (!l) throw std::invalid_argument("classification_accuracy: unlabeled data");
  if (!upper_bound && mode == ClassificationMode::Off)
    throw std::invalid_argument("classification_accuracy: classification mode is off");

  std::vector<std::uint8_t> correct(images.size(), 0);
  const auto run_one = [&](std::size_t i) {
    int predicted;
    if (upper_bound) {
      Graph<S> g;
      auto logits = model.upper_classifier.forward(g, g.constant(images[i]));
      const Tensor<S>& lv = g.value(logits);
      predicted = 0;
      for (std::int64_t c = 1; c < lv.size(); ++c)
        if (lv[c] > lv[predicted]) predicted = static_cast<int>(c);
    } else {
      EpisodeConfig cfg;
      cfg.T = T;
      cfg.mode = RolloutMode::Eval;
      cfg.classification = mode;
      cfg.seed = mix_seed(seed, static_cast<std::uint64_t>(i));
      Graph<S> g;
      const auto ep = run_episode(g, model, images[i], labels[i], cfg);
      predicted = 0;
      for (std::int64_t c = 1; c < ep.class_logits.size(); ++c)
        if (ep.class_logits[c] > ep.class_logits[predicted]) predicted = static_cast<int>(c);
    }
    correct[i] = predicted == *labels[i] ? 1 : 0;
  };

  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(images.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < images.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < images.size(); i = next.fetch_add(1)) run_one(i);
      });
    for (auto& th : pool) th.join();
  }

  std::int64_t hits = 0;
  for (auto c : correct) hits += c;
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

// ---------------------------------------------------------------------------
// report table
// ---------------------------------------------------------------------------

/// Externally published baseline errors on the real 360-degree benchmark,
/// cited as constants for context (never recomputed here).
struct ExternalBaseline {
  const char* name;
  double mse;
  double rmse;
};
inline constexpr ExternalBaseline kExternalBaselines[] = {
    {"external baseline A (RL sidekick policy)", 23.36, 39.0},
    {"external baseline B (RL look-around policy)", 23.16, 38.8},
};

inline std::string render_table(const std::vector<MetricReport>& reports, bool external_baselines = false) {
  std::ostringstream os;
  os << std::left << std::setw(44) << "Method" << std::right << std::setw(16) << "MSE [0-1]x1000"
     << std::setw(14) << "RMSE [0-255]" << "\n";
  os << std::string(74, '-') << "\n";
  for (const auto& r : reports) {
    os << std::left << std::setw(44) << r.policy << std::right << std::fixed << std::setprecision(2)
       << std::setw(16) << r.final_mse << std::setw(14) << r.final_rmse;
    os.unsetf(std::ios::fixed);
    if (r.accuracy) {
      os << "   acc=" << std::fixed << std::setprecision(3) << *r.accuracy;
      os.unsetf(std::ios::fixed);
    }
    os << "\n";
  }
  if (external_baselines) {
    for (const auto& b : kExternalBaselines)
      os << std::left << std::setw(44) << b.name << std::right << std::fixed << std::setprecision(2)
         << std::setw(16) << b.mse << std::setw(14) << b.rmse << "\n";
    os.unsetf(std::ios::fixed);
  }
  return os.str();
}

}  // namespace pano
