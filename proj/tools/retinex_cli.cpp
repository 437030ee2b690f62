// Command-line front end: dataset synthesis, training, decomposition, white
// balance and scoring.

#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "retinex/retinex.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace retinex;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json_file(const fs::path& path) {
  const auto buf = detail::read_all(path);
  auto j = json::parse(buf, nullptr, false);
  if (j.is_discarded()) throw LoadError("invalid JSON in " + path.string());
  return j;
}

void write_json_file(const json& j, const fs::path& path) {
  std::ofstream f(path);
  f << j.dump(2) << '\n';
  if (!f) throw SaveError("cannot write " + path.string());
}

// Fills `var` from the config file when the flag was not given on the command line.
template <class T>
void merge(const CLI::Option* opt, T& var, const json& cfg, const char* key) {
  if (opt->count() != 0 || !cfg.contains(key)) return;
  try {
    var = cfg.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config key '") + key + "': " + e.what());
  }
}

void require(bool present, const char* flag) {
  if (!present) throw UsageError(std::string(flag) + " is required");
}

json number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e15) return static_cast<std::int64_t>(v);
  return v;
}

// Every subcommand shares this shape: options bound into a struct, then a run step.
struct Common {
  std::string config_path;
  json config = json::object();

  void add(CLI::App* app) { app->add_option("--config", config_path, "JSON file with defaults for flags"); }
  void load() {
    if (!config_path.empty()) {
      config = read_json_file(config_path);
      if (!config.is_object()) throw UsageError("--config must hold a JSON object");
    }
  }
};

// synth-data ---------------------------------------------------------------

struct SynthData {
  Common common;
  std::string src, out;
  std::uint64_t seed = 0;
  int size = 128;
  int triplets = 1;
  CLI::Option *o_src, *o_out, *o_size, *o_triplets;

  void setup(CLI::App* app) {
    common.add(app);
    o_src = app->add_option("--src", src, "directory of source images (.pfm, .png)");
    o_out = app->add_option("--out", out, "output dataset directory");
    app->add_option("--seed", seed, "random seed")->required();
    o_size = app->add_option("--size", size, "square training size");
    o_triplets = app->add_option("--triplets", triplets, "triplets rendered per source image");
  }

  int run() {
    common.load();
    merge(o_src, src, common.config, "src");
    merge(o_out, out, common.config, "out");
    merge(o_size, size, common.config, "size");
    merge(o_triplets, triplets, common.config, "triplets");
    require(!src.empty(), "--src");
    require(!out.empty(), "--out");
    DatasetOptions opt;
    opt.size = size;
    opt.triplets_per_source = triplets;
    const auto res = build_dataset(src, out, seed, opt);
    log().info("wrote {} triplets to {} ({} sources skipped)", res.manifest.entries.size(), out, res.skipped.size());
    return 0;
  }
};

// train --------------------------------------------------------------------

struct Train {
  Common common;
  std::string manifest, out, resume;
  int steps = 0;
  std::uint64_t seed = 0;
  int batch = 4;
  double lr = 1e-4;
  int checkpoint_every = 0;
  int base_channels = 16;
  int depth = 3;
  double clip_norm = 0.0;
  CLI::Option *o_manifest, *o_out, *o_steps, *o_batch, *o_lr, *o_every, *o_base, *o_depth, *o_clip, *o_resume;

  void setup(CLI::App* app) {
    common.add(app);
    o_manifest = app->add_option("--manifest", manifest, "dataset manifest.json");
    o_out = app->add_option("--out", out, "directory for checkpoints and train_log.jsonl");
    o_steps = app->add_option("--steps", steps, "total optimizer steps");
    app->add_option("--seed", seed, "random seed (initialization and sampling)")->required();
    o_batch = app->add_option("--batch", batch, "triplets per step");
    o_lr = app->add_option("--lr", lr, "learning rate");
    o_every = app->add_option("--checkpoint-every", checkpoint_every, "checkpoint interval in steps (0: final only)");
    o_base = app->add_option("--base-channels", base_channels, "channels of the first encoder stage");
    o_depth = app->add_option("--depth", depth, "encoder stages");
    o_clip = app->add_option("--clip-norm", clip_norm, "gradient norm clip (0: off)");
    o_resume = app->add_option("--resume", resume, "continue from this checkpoint");
  }

  int run() {
    const json& cfg = common.config;
    common.load();
    merge(o_manifest, manifest, cfg, "manifest");
    merge(o_out, out, cfg, "out");
    merge(o_steps, steps, cfg, "steps");
    merge(o_batch, batch, cfg, "batch");
    merge(o_lr, lr, cfg, "lr");
    merge(o_every, checkpoint_every, cfg, "checkpoint_every");
    merge(o_base, base_channels, cfg, "base_channels");
    merge(o_depth, depth, cfg, "depth");
    merge(o_clip, clip_norm, cfg, "clip_norm");
    merge(o_resume, resume, cfg, "resume");
    require(!manifest.empty(), "--manifest");
    require(!out.empty(), "--out");
    require(steps >= 1, "--steps (>= 1)");

    TrainConfig tc;
    tc.steps = steps;
    tc.batch_size = batch;
    tc.learning_rate = lr;
    tc.seed = seed;
    tc.checkpoint_every = checkpoint_every;
    tc.clip_norm = clip_norm;
    tc.out_dir = out;
    tc.log_path = fs::path(out) / "train_log.jsonl";
    if (cfg.contains("weights")) {
      try {
        tc.weights = cfg.at("weights").get<LossWeights>();
      } catch (const json::exception& e) {
        throw UsageError(std::string("config key 'weights': ") + e.what());
      }
    }
    tc.check();

    const auto man = load_manifest(manifest);
    const auto data = load_dataset(man);
    const auto& first = data.front().views[0].image;

    std::optional<TrainState> state;
    if (!resume.empty()) {
      state.emplace(train_state_from_checkpoint(read_checkpoint(resume)));
    } else {
      ModelConfig mc;
      mc.input_height = first.height();
      mc.input_width = first.width();
      mc.base_channels = base_channels;
      mc.depth = depth;
      mc.seed = seed;
      mc.check();
      state.emplace(RetinexModel(mc));
    }
    const auto res = train(*state, data, tc);
    const auto& last = res.log.back();
    log().info("step {} loss {:.6f}", last.step, last.loss.total);
    return 0;
  }
};

// decompose ----------------------------------------------------------------

struct Decompose {
  Common common;
  std::string ckpt, in, out;
  bool resize = false;
  CLI::Option *o_ckpt, *o_in, *o_out;

  void setup(CLI::App* app) {
    common.add(app);
    o_ckpt = app->add_option("--ckpt", ckpt, "model checkpoint");
    o_in = app->add_option("--in", in, "input image");
    o_out = app->add_option("--out", out, "output directory");
    app->add_flag("--resize", resize, "center-crop and resize the input to the model size");
  }

  int run() {
    common.load();
    merge(o_ckpt, ckpt, common.config, "ckpt");
    merge(o_in, in, common.config, "in");
    merge(o_out, out, common.config, "out");
    require(!ckpt.empty(), "--ckpt");
    require(!in.empty(), "--in");
    require(!out.empty(), "--out");
    const auto model = load_checkpoint(ckpt);
    auto img = load_image(in);
    if (resize) img = center_crop_resize(img, model.config().input_height, model.config().input_width);
    const auto d = model.decompose(img);
    fs::create_directories(out);
    const fs::path dir(out);
    save_image(d.R, dir / "R.pfm", ImageFormat::Pfm);
    save_pfm_field(d.GS, dir / "GS.pfm");
    write_json_file(json{{"c", d.c.c}}, dir / "c.json");
    save_image(reconstruct(d.R, compose_shading(d.GS, d.c)), dir / "recon.pfm", ImageFormat::Pfm);
    return 0;
  }
};

// wb -----------------------------------------------------------------------

struct Wb {
  Common common;
  std::string ckpt, in, out;
  bool reanchor = false;
  bool png = false;
  CLI::Option *o_ckpt, *o_in, *o_out;

  void setup(CLI::App* app) {
    common.add(app);
    o_ckpt = app->add_option("--ckpt", ckpt, "model checkpoint");
    o_in = app->add_option("--in", in, "directory of input images");
    o_out = app->add_option("--out", out, "output directory");
    app->add_flag("--reanchor", reanchor, "match output geometric-mean luminance to the input");
    app->add_flag("--png", png, "also export 16-bit PNG copies");
  }

  int run() {
    common.load();
    merge(o_ckpt, ckpt, common.config, "ckpt");
    merge(o_in, in, common.config, "in");
    merge(o_out, out, common.config, "out");
    require(!ckpt.empty(), "--ckpt");
    require(!in.empty(), "--in");
    require(!out.empty(), "--out");
    const auto model = load_checkpoint(ckpt);
    const auto summary = batch_white_balance(model, in, out, WhiteBalanceOptions{reanchor}, png);
    log().info("white-balanced {} images ({} failed)", summary.records.size(), summary.failed.size());
    return summary.records.empty() ? 1 : 0;
  }
};

// eval ---------------------------------------------------------------------

struct Eval {
  Common common;
  std::string out, pairs;
  CLI::Option *o_out, *o_pairs;

  void setup(CLI::App* app) {
    common.add(app);
    o_out = app->add_option("--out", out, "directory for report.json");
    o_pairs = app->add_option("--pairs", pairs, "JSON list of {output, reference}");
  }

  int run() {
    common.load();
    merge(o_out, out, common.config, "out");
    merge(o_pairs, pairs, common.config, "pairs");
    require(!out.empty(), "--out");
    require(!pairs.empty(), "--pairs");
    const auto report = evaluate_set(load_pairs(pairs));
    fs::create_directories(out);
    write_json_file(json(report), fs::path(out) / "report.json");
    std::cout << json{{"mse", report.mse}, {"mean_dH", report.mean_dH}}.dump() << '\n';
    return 0;
  }
};

// synth-scenes -------------------------------------------------------------

struct SynthScenes {
  Common common;
  std::string out;
  int count = 0;
  std::uint64_t seed = 0;
  int size = 128;
  int patches = 12;
  CLI::Option *o_out, *o_count, *o_size, *o_patches;

  void setup(CLI::App* app) {
    common.add(app);
    o_out = app->add_option("--out", out, "output directory");
    o_count = app->add_option("--count", count, "number of scenes");
    app->add_option("--seed", seed, "random seed")->required();
    o_size = app->add_option("--size", size, "square scene size");
    o_patches = app->add_option("--patches", patches, "reflectance cells per scene");
  }

  int run() {
    common.load();
    merge(o_out, out, common.config, "out");
    merge(o_count, count, common.config, "count");
    merge(o_size, size, common.config, "size");
    merge(o_patches, patches, common.config, "patches");
    require(!out.empty(), "--out");
    require(count >= 1, "--count (>= 1)");
    const fs::path dir(out);
    fs::create_directories(dir);
    json index = json::array();
    for (int i = 0; i < count; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "scene_%03d", i);
      Rng rng(scene_seed(seed, id));
      const auto s = synth_scene(rng, size, patches);
      const std::string base(id);
      save_image(s.I, dir / (base + "_I.pfm"), ImageFormat::Pfm);
      save_image(s.R_gt, dir / (base + "_R.pfm"), ImageFormat::Pfm);
      save_pfm_field(s.GS_gt, dir / (base + "_GS.pfm"));
      save_image(s.white_lit(), dir / (base + "_ref.pfm"), ImageFormat::Pfm);
      index.push_back({{"id", base},
                       {"image", base + "_I.pfm"},
                       {"reflectance", base + "_R.pfm"},
                       {"gray_shading", base + "_GS.pfm"},
                       {"reference", base + "_ref.pfm"},
                       {"c", s.c_gt.c}});
    }
    write_json_file(index, dir / "scenes.json");
    return 0;
  }
};

// metrics ------------------------------------------------------------------

struct Metrics {
  Common common;
  std::string a, b;
  CLI::Option *o_a, *o_b;

  void setup(CLI::App* app) {
    common.add(app);
    o_a = app->add_option("--a", a, "first image");
    o_b = app->add_option("--b", b, "second image");
  }

  int run() {
    common.load();
    merge(o_a, a, common.config, "a");
    merge(o_b, b, common.config, "b");
    require(!a.empty(), "--a");
    require(!b.empty(), "--b");
    const auto ia = load_image(a), ib = load_image(b);
    nlohmann::ordered_json j;
    j["mse"] = number(mse(ia, ib));
    j["mean_dE"] = number(mean_delta_e(ia, ib));
    j["mean_dH"] = number(mean_hue_difference(ia, ib));
    j["ssim"] = number(ssim(ia, ib));
    std::cout << j.dump() << '\n';
    return 0;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised Retinex decomposition toolkit"};
  app.require_subcommand(1);

  SynthData synth_data;
  Train train_cmd;
  Decompose decompose;
  Wb wb;
  Eval eval;
  SynthScenes synth_scenes;
  Metrics metrics;
  auto* c_synth = app.add_subcommand("synth-data", "render training triplets and a manifest");
  auto* c_train = app.add_subcommand("train", "train a model on a manifest");
  auto* c_decomp = app.add_subcommand("decompose", "split one image into R, GS and c");
  auto* c_wb = app.add_subcommand("wb", "white-balance a directory of images");
  auto* c_eval = app.add_subcommand("eval", "score (output, reference) pairs");
  auto* c_scenes = app.add_subcommand("synth-scenes", "render synthetic scenes with ground truth");
  auto* c_metrics = app.add_subcommand("metrics", "compare two images");
  synth_data.setup(c_synth);
  train_cmd.setup(c_train);
  decompose.setup(c_decomp);
  wb.setup(c_wb);
  eval.setup(c_eval);
  synth_scenes.setup(c_scenes);
  metrics.setup(c_metrics);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (c_synth->parsed()) return synth_data.run();
    if (c_train->parsed()) return train_cmd.run();
    if (c_decomp->parsed()) return decompose.run();
    if (c_wb->parsed()) return wb.run();
    if (c_eval->parsed()) return eval.run();
    if (c_scenes->parsed()) return synth_scenes.run();
    if (c_metrics->parsed()) return metrics.run();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
