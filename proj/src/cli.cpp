#include "pano/cli.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "pano/checkpoint.hpp"
#include "pano/dataset.hpp"
#include "pano/harness.hpp"
#include "pano/image_io.hpp"
#include "pano/trainer.hpp"

namespace pano {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

/// One process owns one output directory for the duration of a command.
class OutputDir {
 public:
  explicit OutputDir(const std::string& dir) : root_(dir) {
    fs::create_directories(root_);
    lock_ = root_ / "lock";
    std::error_code ec;
    if (fs::exists(lock_))
      throw std::runtime_error("output directory is locked by another run: " + lock_.string());
    std::ofstream lock(lock_);
    if (!lock) throw std::runtime_error("cannot create lock file in " + dir);
    lock << "pid unknown\n";
  }
  ~OutputDir() {
    std::error_code ec;
    fs::remove(lock_, ec);
  }
  fs::path path(const std::string& rel) const { return root_ / rel; }
  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
  fs::path lock_;
};

ClassificationMode classification_by_name(const std::string& name) {
  if (name == "off") return ClassificationMode::Off;
  if (name == "from-recon") return ClassificationMode::FromRecon;
  if (name == "from-vector") return ClassificationMode::FromVector;
  throw ConfigError("classification must be off|from-recon|from-vector, got '" + name + "'");
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Validated training configuration with explicit defaults.
struct TrainFileConfig {
  std::string manifest;
  std::string profile = "full";
  int glimpses = 8;
  int batch_size = 16;
  int epochs = 1;
  double lr = 1e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t seed = 0;
  std::string classification = "off";
  std::string attention_loss = "sparse";
  int threads = 0;
  int checkpoint_every = 0;

  static TrainFileConfig parse(const json& doc) {
    static const std::set<std::string> known = {"manifest",   "profile",       "glimpses",  "batch_size",
                                                "epochs",     "lr",            "beta1",     "beta2",
                                                "eps",        "seed",          "classification",
                                                "attention_loss", "threads",   "checkpoint_every"};
    if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    for (const auto& [key, _] : doc.items())
      if (!known.count(key)) throw ConfigError("config: unknown key '" + key + "'");

    TrainFileConfig c;
    const auto get = [&](const char* key, auto& slot) {
      if (doc.contains(key)) slot = doc.at(key).get<std::decay_t<decltype(slot)>>();
    };
    if (!doc.contains("manifest") || !doc.at("manifest").is_string())
      throw ConfigError("config: required string key 'manifest' missing");
    c.manifest = doc.at("manifest").get<std::string>();
    get("profile", c.profile);
    get("glimpses", c.glimpses);
    get("batch_size", c.batch_size);
    get("epochs", c.epochs);
    get("lr", c.lr);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("eps", c.eps);
    get("seed", c.seed);
    get("classification", c.classification);
    get("attention_loss", c.attention_loss);
    get("threads", c.threads);
    get("checkpoint_every", c.checkpoint_every);

    if (c.profile != "full" && c.profile != "small" && c.profile != "micro")
      throw ConfigError("config: profile must be full|small|micro");
    if (c.glimpses < 1) throw ConfigError("config: glimpses must be >= 1");
    if (c.batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
    if (c.epochs < 1) throw ConfigError("config: epochs must be >= 1");
    if (!(c.lr >= 0)) throw ConfigError("config: lr must be >= 0");
    if (c.attention_loss != "sparse" && c.attention_loss != "distribution")
      throw ConfigError("config: attention_loss must be sparse|distribution");
    classification_by_name(c.classification);  // validates
    if (c.checkpoint_every < 0) throw ConfigError("config: checkpoint_every must be >= 0");
    return c;
  }

  json to_json(int resolved_threads) const {
    json doc;
    doc["manifest"] = manifest;
    doc["profile"] = profile;
    doc["glimpses"] = glimpses;
    doc["batch_size"] = batch_size;
    doc["epochs"] = epochs;
    doc["lr"] = lr;
    doc["beta1"] = beta1;
    doc["beta2"] = beta2;
    doc["eps"] = eps;
    doc["seed"] = seed;
    doc["classification"] = classification;
    doc["attention_loss"] = attention_loss;
    doc["threads"] = resolved_threads;
    doc["checkpoint_every"] = checkpoint_every;
    return doc;
  }
};

struct LoadedSplit {
  std::vector<Tensor<float>> images;  // at profile resolution
  std::vector<std::optional<int>> labels;
};

LoadedSplit load_split(const DatasetManifest& manifest, const std::string& split, const Profile& profile) {
  LoadedSplit out;
  for (const ManifestEntry* entry : manifest.split_entries(split)) {
    PanoramaSample sample = load_panorama(manifest, *entry);
    Tensor<float> img = sample.pixels;
    if (profile.image_h != kPanoH || profile.image_w != kPanoW)
      img = downscale_area(img, profile.image_h, profile.image_w);
    out.images.push_back(std::move(img));
    out.labels.push_back(entry->label);
  }
  return out;
}

void write_metrics_csv(const fs::path& path, const Profile& profile, const std::vector<MetricsRow>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "iteration,epoch,L_local_mean";
  for (const auto& [h, w] : profile.scales()) os << ",L_" << h << "x" << w;
  os << ",L_attention,L_class,total\n";
  for (const auto& r : rows) {
    os << r.iteration << "," << r.epoch << "," << fmt_double(r.local_mean);
    for (double v : r.scales) os << "," << fmt_double(v);
    os << "," << fmt_double(r.attention) << ",";
    if (r.classification) os << fmt_double(*r.classification);
    os << "," << fmt_double(r.total) << "\n";
  }
}

/// Grayscale heatmap of a patch distribution at panorama resolution,
/// brightness linear in probability over [0, max probability].
Tensor<float> render_heatmap(const std::vector<double>& dist, const GridGeometry& g) {
  double max_p = 0;
  for (double v : dist) max_p = std::max(max_p, v);
  Tensor<float> img({g.image_h, g.image_w, 3});
  for (int p = 0; p < g.patch_count(); ++p) {
    const BlockIndex b = block_of(g, p);
    const float v = max_p > 0 ? static_cast<float>(dist[static_cast<size_t>(p)] / max_p) : 0.0f;
    for (int y = b.row * g.block; y < (b.row + 1) * g.block; ++y)
      for (int x = b.col * g.block; x < (b.col + 1) * g.block; ++x)
        for (int c = 0; c < 3; ++c) img(y, x, c) = v;
  }
  return img;
}

void draw_block_border(Tensor<float>& img, const GridGeometry& g, const BlockIndex& b, float r, float gr, float bl) {
  const int y0 = b.row * g.block, x0 = b.col * g.block, n = g.block;
  for (int i = 0; i < n; ++i) {
    const int ys[2] = {y0, y0 + n - 1};
    const int xs[2] = {x0, x0 + n - 1};
    for (int yy : ys) {
      img(yy, x0 + i, 0) = r;
      img(yy, x0 + i, 1) = gr;
      img(yy, x0 + i, 2) = bl;
    }
    for (int xx : xs) {
      img(y0 + i, xx, 0) = r;
      img(y0 + i, xx, 1) = gr;
      img(y0 + i, xx, 2) = bl;
    }
  }
}

std::string step_name(const char* what, int step) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "step_%02d_%s.png", step, what);
  return buf;
}

}  // namespace

int cmd_synth(const SynthArgs& args) {
  if (args.out.empty()) throw ConfigError("synth: --out is required");
  if (args.count <= 0) throw ConfigError("synth: --count must be positive");
  if (args.class_count < 2) throw ConfigError("synth: --classes must be >= 2");
  if (args.train_fraction < 0 || args.train_fraction > 1)
    throw ConfigError("synth: --train-fraction must be in [0,1]");

  SynthSpec spec;
  spec.count = args.count;
  spec.seed = args.seed;
  spec.class_count = args.class_count;
  OutputDir out(args.out);
  const std::string manifest = write_corpus(out.root().string(), spec, args.train_fraction);
  std::printf("wrote %d images, manifest at %s\n", args.count, manifest.c_str());
  return 0;
}

int cmd_train(const TrainArgs& args) {
  if (args.config_path.empty()) throw ConfigError("train: --config is required");
  if (args.out.empty()) throw ConfigError("train: --out is required");
  std::ifstream cf(args.config_path);
  if (!cf) throw ConfigError("train: cannot open config " + args.config_path);
  json doc;
  try {
    cf >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("train: config parse error: " + std::string(e.what()));
  }
  TrainFileConfig cfg = TrainFileConfig::parse(doc);
  if (args.seed_override) cfg.seed = *args.seed_override;
  if (args.profile_override) {
    cfg.profile = *args.profile_override;
    if (cfg.profile != "full" && cfg.profile != "small" && cfg.profile != "micro")
      throw ConfigError("train: profile must be full|small|micro");
  }

  // everything below is validated; now outputs may be created
  const DatasetManifest manifest = load_manifest(cfg.manifest);
  const Profile profile = profile_by_name(cfg.profile, static_cast<int>(manifest.class_names.size()));
  const int threads = resolve_threads(cfg.threads);

  OutputDir out(args.out);
  {
    std::ofstream ec(out.path("effective_config.json"));
    ec << cfg.to_json(threads).dump(2) << "\n";
  }

  LoadedSplit split = load_split(manifest, "train", profile);
  if (split.images.empty()) throw std::runtime_error("train: manifest has no train entries");

  ModelParams<float> model(profile);
  model.store.init_random(mix_seed(cfg.seed, 0x1417));
  Adam<float> adam(model.store, AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps});

  std::int64_t start_iteration = 0;
  if (!args.resume.empty()) start_iteration = load_checkpoint(args.resume, model, &adam);

  TrainConfig tc;
  tc.T = cfg.glimpses;
  tc.batch_size = cfg.batch_size;
  tc.epochs = cfg.epochs;
  tc.adam = AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
  tc.seed = cfg.seed;
  tc.classification = classification_by_name(cfg.classification);
  tc.attention_distribution_loss = cfg.attention_loss == "distribution";
  tc.threads = threads;
  tc.checkpoint_every = cfg.checkpoint_every;

  fs::create_directories(out.path("checkpoints"));
  const auto save_at = [&](std::int64_t iter) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "checkpoints/ckpt_%08lld.bin", static_cast<long long>(iter));
    save_checkpoint(out.path(buf).string(), model, iter, &adam);
  };

  const TrainResult result = train(model, adam, split.images, split.labels, tc, save_at, start_iteration);

  write_metrics_csv(out.path("metrics.csv"), profile, result.metrics);
  save_checkpoint(out.path("checkpoints/ckpt_final.bin").string(), model, result.iterations, &adam);
  std::printf("trained %lld iterations; final checkpoint at %s\n", static_cast<long long>(result.iterations),
              out.path("checkpoints/ckpt_final.bin").string().c_str());
  return 0;
}

int cmd_eval(const EvalArgs& args) {
  if (args.manifest.empty()) throw ConfigError("eval: --manifest is required");
  if (args.out.empty()) throw ConfigError("eval: --out is required");
  if (args.glimpses < 1) throw ConfigError("eval: --glimpses must be >= 1");
  if (args.eval_seeds < 1) throw ConfigError("eval: --eval-seeds must be >= 1");

  std::vector<PolicyKind> kinds;
  const std::vector<std::string> requested = args.policies.empty() ? std::vector<std::string>{"learned"} : args.policies;
  for (const auto& name : requested) kinds.push_back(policy_by_name(name));  // throws ConfigError-ish

  const bool needs_checkpoint =
      std::any_of(kinds.begin(), kinds.end(), [](PolicyKind k) { return k == PolicyKind::Learned; });
  if (needs_checkpoint && args.checkpoint.empty())
    throw ConfigError("eval: --checkpoint is required for the learned policy");

  std::string profile_name = args.profile;
  int class_count = 0;
  if (!args.checkpoint.empty()) {
    const CheckpointInfo info = peek_checkpoint(args.checkpoint);
    profile_name = info.profile_name;
    class_count = info.class_count;
  }
  if (profile_name.empty()) throw ConfigError("eval: --profile is required when no checkpoint is given");

  const DatasetManifest manifest = load_manifest(args.manifest);
  if (class_count == 0) class_count = static_cast<int>(manifest.class_names.size());
  const Profile profile = profile_by_name(profile_name, class_count);
  const int threads = resolve_threads(args.threads);

  ModelParams<float> model(profile);
  if (!args.checkpoint.empty()) {
    load_checkpoint(args.checkpoint, model);
  } else {
    model.store.init_random(mix_seed(args.seed, 0x1417));
  }

  LoadedSplit split = load_split(manifest, args.split, profile);
  if (split.images.empty()) throw std::runtime_error("eval: split '" + args.split + "' is empty");

  std::vector<std::uint64_t> seeds;
  for (int k = 0; k < args.eval_seeds; ++k) seeds.push_back(args.seed + static_cast<std::uint64_t>(k));

  OutputDir out(args.out);
  std::vector<MetricReport> reports;
  for (PolicyKind kind : kinds) {
    MetricReport report = evaluate(model, split.images, kind, args.glimpses, seeds, threads);
    if (kind == PolicyKind::Learned && args.classification != "off") {
      const bool upper = args.classification == "upper-bound";
      const ClassificationMode mode = upper ? ClassificationMode::Off : classification_by_name(args.classification);
      report.accuracy =
          classification_accuracy(model, split.images, split.labels, mode, args.glimpses, args.seed, threads, upper);
    }
    reports.push_back(std::move(report));
  }

  std::ofstream curves(out.path("curves.csv"));
  curves << "policy,step,mse_0_1_x1000,rmse_0_255\n";
  for (const auto& r : reports)
    for (int t = 0; t < r.steps; ++t)
      curves << r.policy << "," << (t + 1) << "," << fmt_double(r.mse_curve[static_cast<size_t>(t)]) << ","
             << fmt_double(r.rmse_curve[static_cast<size_t>(t)]) << "\n";
  curves.close();

  const std::string table = render_table(reports, args.external_baselines);
  std::ofstream tf(out.path("table.txt"));
  tf << table;
  tf.close();
  std::fputs(table.c_str(), stdout);
  return 0;
}

int cmd_explore(const ExploreArgs& args) {
  if (args.checkpoint.empty()) throw ConfigError("explore: --checkpoint is required");
  if (args.image.empty()) throw ConfigError("explore: --image is required");
  if (args.glimpses < 1) throw ConfigError("explore: --glimpses must be >= 1");
  if (args.out.empty()) throw ConfigError("explore: --out is required");
  const PolicyKind kind = policy_by_name(args.policy);

  const CheckpointInfo info = peek_checkpoint(args.checkpoint);
  const Profile profile = profile_by_name(info.profile_name, info.class_count);
  ModelParams<float> model(profile);
  load_checkpoint(args.checkpoint, model);
  const GridGeometry geom = profile.geometry();

  Tensor<float> img = read_image_rgb(args.image);
  if (img.dim(0) != kPanoH || img.dim(1) != kPanoW) img = resize_bilinear(img, kPanoH, kPanoW);
  if (profile.image_h != kPanoH) img = downscale_area(img, profile.image_h, profile.image_w);

  EpisodeConfig cfg;
  cfg.T = args.glimpses;
  cfg.mode = RolloutMode::Eval;
  cfg.seed = args.seed;

  OutputDir out(args.out);
  Graph<float> g;
  const PolicyFn<float> policy = make_policy<float>(kind);
  const auto ep = run_episode(g, model, img, std::nullopt, cfg, &policy);

  json trace;
  trace["image"] = args.image;
  trace["checkpoint"] = args.checkpoint;
  trace["glimpses"] = args.glimpses;
  trace["seed"] = args.seed;
  trace["policy"] = policy_name(kind);
  trace["steps"] = json::array();

  Tensor<float> overlay_base = img;
  for (int t = 0; t < args.glimpses; ++t) {
    const int pid = ep.trajectory[static_cast<size_t>(t)];
    const BlockIndex center = block_of(geom, pid);

    const std::string recon_name = step_name("recon", t + 1);
    const std::string heat_name = step_name("heatmap", t + 1);
    const std::string overlay_name = step_name("overlay", t + 1);
    write_png_rgb(out.path(recon_name).string(), ep.step_recons[static_cast<size_t>(t)]);
    write_png_rgb(out.path(heat_name).string(), render_heatmap(ep.step_attention[static_cast<size_t>(t)], geom));

    Tensor<float> overlay = overlay_base;
    for (int s = 0; s <= t; ++s) {
      const BlockIndex b = block_of(geom, ep.trajectory[static_cast<size_t>(s)]);
      if (s < t)
        draw_block_border(overlay, geom, b, 1.0f, 1.0f, 1.0f);
      else
        draw_block_border(overlay, geom, b, 1.0f, 0.1f, 0.1f);
    }
    write_png_rgb(out.path(overlay_name).string(), overlay);

    json step;
    step["step"] = t + 1;
    step["patch"] = pid;
    step["center"] = {{"col", center.col}, {"row", center.row}};
    step["distribution"] = ep.step_attention[static_cast<size_t>(t)];
    step["losses"] = {{"local", ep.losses.local[static_cast<size_t>(t)]},
                      {"mse_0_1_x1000", mse_metric(ep.step_recons[static_cast<size_t>(t)], img)}};
    step["recon"] = recon_name;
    step["heatmap"] = heat_name;
    step["overlay"] = overlay_name;
    trace["steps"].push_back(std::move(step));
  }

  if (args.dump_memory) {
    std::ofstream ms(out.path("memory_matrix.bin"), std::ios::binary);
    write_snapshot(ms, ep.state.matrix);
    std::ofstream vs(out.path("memory_vector.bin"), std::ios::binary);
    write_snapshot(vs, ep.state.vector);
  }

  std::ofstream tf(out.path("trace.json"));
  tf << trace.dump(2) << "\n";
  std::printf("explored %d steps; trace at %s\n", args.glimpses, out.path("trace.json").string().c_str());
  return 0;
}

int cmd_report(const ReportArgs& args) {
  if (args.curves.empty()) throw ConfigError("report: at least one curves.csv is required");
  std::vector<MetricReport> reports;
  for (const auto& path : args.curves) {
    std::ifstream is(path);
    if (!is) throw ConfigError("report: cannot open " + path);
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("report: empty csv " + path);
    std::map<std::string, MetricReport> by_policy;
    std::vector<std::string> order;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string policy, step, mse, rmse;
      if (!std::getline(ls, policy, ',') || !std::getline(ls, step, ',') || !std::getline(ls, mse, ',') ||
          !std::getline(ls, rmse, ','))
        throw std::runtime_error("report: malformed row in " + path + ": " + line);
      auto [it, inserted] = by_policy.try_emplace(policy);
      if (inserted) order.push_back(policy);
      it->second.policy = policy;
      it->second.mse_curve.push_back(std::stod(mse));
      it->second.rmse_curve.push_back(std::stod(rmse));
    }
    for (const auto& policy : order) {
      MetricReport r = by_policy[policy];
      r.steps = static_cast<int>(r.mse_curve.size());
      r.final_mse = r.mse_curve.back();
      r.final_rmse = r.rmse_curve.back();
      reports.push_back(std::move(r));
    }
  }
  std::fputs(render_table(reports, args.external_baselines).c_str(), stdout);
  return 0;
}

}  // namespace pano
