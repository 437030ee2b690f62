#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "retinex/log.hpp"
#include "retinex/losses.hpp"
#include "retinex/model.hpp"
#include "retinex/synthesis.hpp"

namespace retinex {

struct TrainingError : Error {
  using Error::Error;
};

struct TrainConfig {
  int steps = 1;
  int batch_size = 4;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; 0 disables.
  double clip_norm = 0.0;
  std::uint64_t seed = 0;
  /// Write step_<n>.ckpt every this many steps; 0 writes only the final checkpoint.
  int checkpoint_every = 0;
  std::filesystem::path out_dir;
  std::filesystem::path log_path;
  LossWeights weights;

  void check() const {
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
    weights.check();
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"steps", c.steps},         {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
                     {"beta1", c.beta1},         {"beta2", c.beta2},           {"epsilon", c.epsilon},
                     {"clip_norm", c.clip_norm}, {"seed", c.seed},             {"checkpoint_every", c.checkpoint_every},
                     {"weights", c.weights}};
}

/// First and second moment estimates, one array per parameter.
struct AdamState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::uint64_t t = 0;

  static AdamState for_model(const RetinexModel& model) {
    AdamState s;
    for (const auto& p : model.params().all()) {
      s.m.emplace_back(p.size(), 0.0f);
      s.v.emplace_back(p.size(), 0.0f);
    }
    return s;
  }
};

/// A model plus everything needed to continue optimizing it bit-exactly.
struct TrainState {
  RetinexModel model;
  AdamState adam;
  std::uint64_t step = 0;

  explicit TrainState(RetinexModel m) : model(std::move(m)), adam(AdamState::for_model(model)) {}
};

struct TrainLogRecord {
  std::uint64_t step = 0;
  LossBreakdown loss;
  double wall_time = 0.0;
  double learning_rate = 0.0;
};

inline void to_json(nlohmann::json& j, const TrainLogRecord& r) {
  j = nlohmann::json{{"step", r.step}, {"loss", r.loss}, {"wall_time", r.wall_time}, {"learning_rate", r.learning_rate}};
}

namespace detail {

inline Triple<Image<double>> view_images(const TrainingTriplet& t) {
  return {t.views[0].image.cast<double>(), t.views[1].image.cast<double>(), t.views[2].image.cast<double>()};
}

inline Triple<Rgb> view_colors(const TrainingTriplet& t) { return {t.views[0].c.c, t.views[1].c.c, t.views[2].c.c}; }

inline void check_triplet_shape(const TrainingTriplet& t, const ModelConfig& cfg) {
  for (const auto& v : t.views) {
    if (v.image.height() != cfg.input_height || v.image.width() != cfg.input_width) {
      throw ShapeError("triplet '" + t.scene_id + "' view is " + std::to_string(v.image.width()) + "x" +
                       std::to_string(v.image.height()) + ", model expects " + std::to_string(cfg.input_width) + "x" +
                       std::to_string(cfg.input_height));
    }
  }
}

}  // namespace detail

/// Loss of one triplet under the current parameters (no mutation).
inline LossBreakdown triplet_loss(const RetinexModel& model, const TrainingTriplet& t, const LossWeights& w) {
  detail::check_triplet_shape(t, model.config());
  Triple<ViewDecomposition> views;
  for (int i = 0; i < 3; ++i) views[i] = to_view(model.decompose(t.views[i].image));
  return total_loss(detail::view_images(t), views, detail::view_colors(t), w);
}

/// Accumulates the batch-mean gradient into the model's parameter gradients and
/// returns the batch-mean loss.
inline LossBreakdown accumulate_gradients(RetinexModel& model, const std::vector<const TrainingTriplet*>& batch,
                                          const LossWeights& w) {
  if (batch.empty()) throw TrainingError("empty batch");
  model.params().zero_grad();
  LossBreakdown sum;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::array<RetinexModel::Cache, 3> caches;
  for (const TrainingTriplet* t : batch) {
    detail::check_triplet_shape(*t, model.config());
    Triple<ViewDecomposition> views;
    for (int i = 0; i < 3; ++i) {
      model.forward(t->views[i].image, caches[i]);
      views[i] = to_view(model.outputs(caches[i]));
    }
    LossGradients g;
    const auto b = total_loss(detail::view_images(*t), views, detail::view_colors(*t), w, &g);
    const auto bad = b.non_finite_term();
    if (!bad.empty()) throw TrainingError("non-finite loss term '" + bad + "' on scene '" + t->scene_id + "'");
    sum += b;
    for (int i = 0; i < 3; ++i) {
      for (auto& v : g.R[i].data()) v *= inv_b;
      for (auto& v : g.GS[i].data()) v *= inv_b;
      for (auto& v : g.c[i]) v *= inv_b;
      model.backward(caches[i], g.R[i], g.GS[i], g.c[i]);
    }
  }
  return sum.scaled_by(inv_b);
}

/// One optimizer update on `batch`; returns the pre-update batch-mean loss.
/// The update is skipped when every gradient component is exactly zero.
inline LossBreakdown training_step(TrainState& state, const std::vector<const TrainingTriplet*>& batch,
                                   const TrainConfig& config) {
  auto& model = state.model;
  const LossBreakdown loss = accumulate_gradients(model, batch, config.weights);
  auto& params = model.params().all();

  double norm2 = 0.0;
  for (const auto& p : params) {
    for (float g : p.grad) norm2 += static_cast<double>(g) * g;
  }
  if (!std::isfinite(norm2)) throw TrainingError("non-finite gradient");
  ++state.step;
  if (norm2 == 0.0) return loss;
  double clip = 1.0;
  if (config.clip_norm > 0.0 && std::sqrt(norm2) > config.clip_norm) clip = config.clip_norm / std::sqrt(norm2);

  auto& adam = state.adam;
  ++adam.t;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(adam.t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(adam.t));
  const auto b1 = static_cast<float>(config.beta1), b2 = static_cast<float>(config.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = adam.m[i];
    auto& v = adam.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const float g = static_cast<float>(p.grad[k] * clip);
      m[k] = b1 * m[k] + (1.0f - b1) * g;
      v[k] = b2 * v[k] + (1.0f - b2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p.value[k] -= static_cast<float>(config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon));
      if (!std::isfinite(p.value[k])) throw TrainingError("parameter '" + p.name + "' became non-finite");
    }
  }
  return loss;
}

/// Triplet indices of a batch, a pure function of (seed, step): the data is
/// walked in per-epoch seeded permutations.
class BatchSampler {
 public:
  BatchSampler(std::size_t dataset_size, std::uint64_t seed) : n_(dataset_size), seed_(seed) {
    if (n_ == 0) throw TrainingError("empty dataset");
  }

  std::vector<std::size_t> batch(std::uint64_t step, int batch_size) {
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(batch_size));
    for (int b = 0; b < batch_size; ++b) {
      const std::uint64_t pos = step * static_cast<std::uint64_t>(batch_size) + static_cast<std::uint64_t>(b);
      const std::uint64_t epoch = pos / n_;
      if (!perm_ || epoch != epoch_) {
        std::vector<std::size_t> perm(n_);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        Rng rng(seed_ ^ fnv1a64("epoch:" + std::to_string(epoch)));
        // Fisher-Yates with explicit draws keeps the order independent of the std::shuffle implementation
        for (std::size_t i = n_ - 1; i > 0; --i) {
          const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
          std::swap(perm[i], perm[j]);
        }
        perm_ = std::move(perm);
        epoch_ = epoch;
      }
      out.push_back((*perm_)[pos % n_]);
    }
    return out;
  }

 private:
  std::size_t n_;
  std::uint64_t seed_;
  std::uint64_t epoch_ = 0;
  std::optional<std::vector<std::size_t>> perm_;
};

inline Checkpoint make_training_checkpoint(const TrainState& state, const TrainConfig& config) {
  Checkpoint ck = make_checkpoint(state.model);
  ck.training_step = state.step;
  ck.rng_state = nlohmann::json{{"sampler_seed", config.seed}, {"next_step", state.step}}.dump();
  const auto& params = state.model.params().all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    ck.optimizer_state.push_back(NamedArray{"adam.m/" + params[i].name, params[i].shape, state.adam.m[i]});
    ck.optimizer_state.push_back(NamedArray{"adam.v/" + params[i].name, params[i].shape, state.adam.v[i]});
  }
  ck.metadata["adam_t"] = state.adam.t;
  ck.metadata["train_config"] = config;
  return ck;
}

/// Restores model, optimizer moments and step counter from a training checkpoint.
inline TrainState train_state_from_checkpoint(const Checkpoint& ck) {
  TrainState state(model_from_checkpoint(ck));
  state.step = ck.training_step;
  const auto& params = state.model.params().all();
  if (!ck.optimizer_state.empty()) {
    if (ck.optimizer_state.size() != 2 * params.size()) throw CheckpointError("optimizer state does not match model");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& m = ck.optimizer_state[2 * i];
      const auto& v = ck.optimizer_state[2 * i + 1];
      if (m.name != "adam.m/" + params[i].name || v.name != "adam.v/" + params[i].name ||
          m.data.size() != params[i].size() || v.data.size() != params[i].size()) {
        throw CheckpointError("optimizer state mismatch at " + params[i].name);
      }
      state.adam.m[i] = m.data;
      state.adam.v[i] = v.data;
    }
    state.adam.t = ck.metadata.value("adam_t", std::uint64_t{0});
  }
  return state;
}

inline std::vector<TrainingTriplet> load_dataset(const DatasetManifest& manifest) {
  if (manifest.entries.empty()) throw TrainingError("manifest has no entries");
  std::vector<TrainingTriplet> data;
  data.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) data.push_back(load_triplet(manifest, e));
  return data;
}

struct TrainResult {
  Checkpoint final_checkpoint;
  std::vector<TrainLogRecord> log;
};

/// Runs until state.step reaches config.steps, logging one JSON line per step
/// and writing step_<n>.ckpt files into config.out_dir.
inline TrainResult train(TrainState& state, const std::vector<TrainingTriplet>& data, const TrainConfig& config) {
  config.check();
  if (data.empty()) throw TrainingError("empty dataset");
  if (state.step >= static_cast<std::uint64_t>(config.steps)) {
    throw TrainingError("state is already at step " + std::to_string(state.step) + " >= requested " +
                        std::to_string(config.steps));
  }
  if (!config.out_dir.empty()) std::filesystem::create_directories(config.out_dir);
  std::ofstream log_file;
  if (!config.log_path.empty()) {
    if (config.log_path.has_parent_path()) std::filesystem::create_directories(config.log_path.parent_path());
    log_file.open(config.log_path, state.step == 0 ? std::ios::trunc : std::ios::app);
    if (!log_file) throw SaveError("cannot open log " + config.log_path.string());
  }
  BatchSampler sampler(data.size(), config.seed);
  TrainResult result;
  const auto start = std::chrono::steady_clock::now();
  auto write_ckpt = [&] {
    if (config.out_dir.empty()) return;
    write_checkpoint(make_training_checkpoint(state, config),
                     config.out_dir / ("step_" + std::to_string(state.step) + ".ckpt"));
  };
  while (state.step < static_cast<std::uint64_t>(config.steps)) {
    const auto idx = sampler.batch(state.step, config.batch_size);
    std::vector<const TrainingTriplet*> batch;
    for (auto i : idx) batch.push_back(&data[i]);
    const auto loss = training_step(state, batch, config);
    TrainLogRecord rec{state.step, loss,
                       std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(),
                       config.learning_rate};
    if (log_file) log_file << nlohmann::json(rec).dump() << '\n' << std::flush;
    log().debug("step {} loss {:.6f}", rec.step, loss.total);
    result.log.push_back(rec);
    if (config.checkpoint_every > 0 && state.step % static_cast<std::uint64_t>(config.checkpoint_every) == 0 &&
        state.step < static_cast<std::uint64_t>(config.steps)) {
      write_ckpt();
    }
  }
  write_ckpt();
  result.final_checkpoint = make_training_checkpoint(state, config);
  return result;
}

inline TrainResult train(TrainState& state, const DatasetManifest& manifest, const TrainConfig& config) {
  return train(state, load_dataset(manifest), config);
}

/// Mean loss over every triplet of the dataset; parameters are untouched.
inline LossBreakdown evaluate_loss(const RetinexModel& model, const std::vector<TrainingTriplet>& data,
                                   const LossWeights& w) {
  if (data.empty()) throw TrainingError("empty dataset");
  LossBreakdown sum;
  for (const auto& t : data) sum += triplet_loss(model, t, w);
  return sum.scaled_by(1.0 / static_cast<double>(data.size()));
}

inline LossBreakdown evaluate_loss(const RetinexModel& model, const DatasetManifest& manifest, const TrainConfig& config) {
  return evaluate_loss(model, load_dataset(manifest), config.weights);
}

}  // namespace retinex
