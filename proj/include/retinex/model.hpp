#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "retinex/image.hpp"
#include "retinex/image_io.hpp"
#include "retinex/nn.hpp"
#include "retinex/synthesis.hpp"

namespace retinex {

struct ConfigError : Error {
  using Error::Error;
};

struct CheckpointError : Error {
  using Error::Error;
};

struct ModelConfig {
  int input_height = 128;
  int input_width = 128;
  int base_channels = 16;
  int depth = 3;
  std::uint64_t seed = 0;

  void check() const {
    if (depth < 1 || depth > 6) throw ConfigError("depth must be in [1, 6]");
    const int div = 1 << depth;
    if (input_height <= 0 || input_width <= 0 || input_height % div != 0 || input_width % div != 0) {
      throw ConfigError("input size " + std::to_string(input_height) + "x" + std::to_string(input_width) +
                        " must be divisible by 2^depth = " + std::to_string(div));
    }
    if (base_channels < 4) throw ConfigError("base_channels must be >= 4");
  }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"input_height", c.input_height},
                     {"input_width", c.input_width},
                     {"base_channels", c.base_channels},
                     {"depth", c.depth},
                     {"seed", c.seed}};
}
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("input_height").get_to(c.input_height);
  j.at("input_width").get_to(c.input_width);
  j.at("base_channels").get_to(c.base_channels);
  j.at("depth").get_to(c.depth);
  j.at("seed").get_to(c.seed);
}

/// Reflectance in [0,1]^3, gray shading >= 0, global illumination colour > 0.
struct Decomposition {
  LinearImage R;
  Image<float> GS;
  IlluminationColor c;
};

/// S(x,y) = c * GS(x,y).
template <class T>
Image<T> compose_shading(const Image<T>& gs, const IlluminationColor& c) {
  if (gs.channels() != 1) throw ShapeError("gray shading must be single-channel");
  Image<T> s(gs.height(), gs.width(), 3);
  const auto g = gs.data();
  auto d = s.data();
  for (std::size_t p = 0; p < gs.size(); ++p) {
    for (int k = 0; k < 3; ++k) d[3 * p + k] = static_cast<T>(c.c[k] * g[p]);
  }
  return s;
}

/// Pixel-wise, channel-wise product R * S.
template <class T>
Image<T> reconstruct(const Image<T>& r, const Image<T>& s) {
  require_same_shape(r, s, "reconstruct");
  Image<T> out(r.height(), r.width(), r.channels());
  const auto a = r.data(), b = s.data();
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] * b[i];
  return out;
}

/// Single encoder feeding three heads: reflectance (U-Net decoder, logistic),
/// gray shading (U-Net decoder, softplus) and illumination colour (softplus
/// over an MLP on pooled bottleneck features plus a linear path from input
/// statistics, which starts out as a gray-world estimate). The network sees
/// the image in linear and log form.
class RetinexModel {
 public:
  static constexpr float kMinColor = 1e-6f;
  static constexpr int kStats = 4;  // log chroma x3, off-grid exposure
  static constexpr int kInputChannels = 6;
  static constexpr float kLogOffset = 1e-3f;
  // The colour logits are this multiple of the stored parameters, so each optimizer
  // step moves c a tenth as far as it moves the rest of the network.
  static constexpr float kColorStep = 0.1f;

  /// Activations of one forward pass, kept for the backward pass.
  struct Cache {
    nn::Tensor input;
    std::vector<nn::Tensor> enc_a, enc_b, pooled;
    nn::Tensor bottleneck;
    struct Decoder {
      std::vector<nn::Tensor> cat, act;
      nn::Tensor final_cat;
      nn::Tensor logits;
    };
    std::array<Decoder, 2> dec;
    std::vector<float> gap, stats, hidden_pre, hidden, color_logits;
    std::vector<float> col;
  };

  RetinexModel() = default;

  explicit RetinexModel(const ModelConfig& config) : config_(config) {
    config_.check();
    build();
    initialize();
  }

  const ModelConfig& config() const { return config_; }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  void forward(const LinearImage& img, Cache& cache) const {
    if (img.height() != config_.input_height || img.width() != config_.input_width || img.channels() != 3) {
      throw ShapeError("model expects " + shape_string(config_.input_height, config_.input_width, 3) + " input, got " +
                       shape_string(img.height(), img.width(), img.channels()));
    }
    const int D = config_.depth;
    cache.input = to_tensor(img);
    cache.enc_a.resize(D);
    cache.enc_b.resize(D);
    cache.pooled.resize(D);
    const nn::Tensor* x = &cache.input;
    for (int s = 0; s < D; ++s) {
      enc1_[s].forward(store_, *x, cache.enc_a[s], cache.col);
      nn::leaky_relu_inplace(cache.enc_a[s]);
      enc2_[s].forward(store_, cache.enc_a[s], cache.enc_b[s], cache.col);
      nn::leaky_relu_inplace(cache.enc_b[s]);
      cache.pooled[s] = nn::avg_pool2(cache.enc_b[s]);
      x = &cache.pooled[s];
    }
    bottleneck_.forward(store_, *x, cache.bottleneck, cache.col);
    nn::leaky_relu_inplace(cache.bottleneck);

    for (int d = 0; d < 2; ++d) {
      auto& dc = cache.dec[d];
      dc.cat.resize(D);
      dc.act.resize(D);
      const nn::Tensor* prev = &cache.bottleneck;
      for (int s = D - 1; s >= 0; --s) {
        const auto& skip = cache.enc_b[s];
        dc.cat[s] = nn::Tensor(prev->c + skip.c, skip.h, skip.w);
        nn::upsample2_into(*prev, dc.cat[s], 0);
        nn::copy_channels(skip, dc.cat[s], prev->c);
        dec_[d][s].forward(store_, dc.cat[s], dc.act[s], cache.col);
        nn::leaky_relu_inplace(dc.act[s]);
        prev = &dc.act[s];
      }
      dc.final_cat = nn::Tensor(prev->c + kInputChannels, prev->h, prev->w);
      nn::copy_channels(*prev, dc.final_cat, 0);
      nn::copy_channels(cache.input, dc.final_cat, prev->c);
      head_[d].forward(store_, dc.final_cat, dc.logits, cache.col);
    }

    const auto& b = cache.bottleneck;
    cache.gap.assign(static_cast<std::size_t>(b.c) + kStats, 0.0f);
    for (int k = 0; k < b.c; ++k) {
      const float* p = b.channel(k);
      double s = 0.0;
      for (std::size_t i = 0; i < b.plane(); ++i) s += p[i];
      cache.gap[k] = static_cast<float>(s / static_cast<double>(b.plane()));
    }
    // gray-world cue: the cast shows up directly in the channel means
    cache.stats.assign(kStats, 0.0f);
    for (int k = 0; k < 3; ++k) {
      const float* p = cache.input.channel(k);
      double s = 0.0;
      for (std::size_t i = 0; i < cache.input.plane(); ++i) s += p[i];
      cache.stats[k] = static_cast<float>(std::log(s / static_cast<double>(cache.input.plane()) + 1e-4));
    }
    // chroma only: log means relative to their luminance-weighted average
    float mean_log = 0.0f;
    for (int k = 0; k < 3; ++k) mean_log += static_cast<float>(kLuminanceWeights[k]) * cache.stats[k];
    for (int k = 0; k < 3; ++k) cache.stats[k] -= mean_log;
    // exposure offset from the nearest whole stop above or below middle gray; the
    // training views sit on that grid, so what is left over is the cast's brightness
    const double stops = std::log2(geometric_mean_luminance(img) / kMiddleGray);
    cache.stats[3] = static_cast<float>(stops - std::round(stops));
    for (int k = 0; k < kStats; ++k) cache.gap[static_cast<std::size_t>(b.c + k)] = cache.stats[k];
    cache.hidden_pre = color_hidden_.forward(store_, cache.gap);
    cache.hidden = cache.hidden_pre;
    for (auto& v : cache.hidden) v = v > 0.0f ? v : nn::kLeakySlope * v;
    cache.color_logits = color_out_.forward(store_, cache.hidden);
    const auto skip = color_skip_.forward(store_, cache.stats);
    for (int k = 0; k < 3; ++k) cache.color_logits[k] = kColorStep * (cache.color_logits[k] + skip[k]);
  }

  Decomposition outputs(const Cache& cache) const {
    const int h = config_.input_height, w = config_.input_width;
    Decomposition out{LinearImage(h, w, 3), Image<float>(h, w, 1), IlluminationColor{}};
    const auto& zr = cache.dec[0].logits;
    const auto& zg = cache.dec[1].logits;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * w + x;
        for (int k = 0; k < 3; ++k) out.R(x, y, k) = nn::sigmoid(zr.channel(k)[p]);
        out.GS(x, y) = nn::softplus(zg.channel(0)[p]);
      }
    }
    for (int k = 0; k < 3; ++k) {
      out.c.c[k] = std::max(nn::softplus(cache.color_logits[k]), kMinColor);
    }
    return out;
  }

  Decomposition decompose(const LinearImage& img) const {
    Cache cache;
    forward(img, cache);
    return outputs(cache);
  }

  /// Back-propagates output gradients and accumulates parameter gradients.
  void backward(Cache& cache, const Image<double>& grad_r, const Image<double>& grad_gs, const Rgb& grad_c) {
    const int D = config_.depth;
    const int h = config_.input_height, w = config_.input_width;
    nn::Tensor grad_bottleneck(cache.bottleneck.c, cache.bottleneck.h, cache.bottleneck.w);
    std::vector<nn::Tensor> grad_skip(D);
    for (int s = 0; s < D; ++s) grad_skip[s] = nn::Tensor(cache.enc_b[s].c, cache.enc_b[s].h, cache.enc_b[s].w);

    for (int d = 0; d < 2; ++d) {
      auto& dc = cache.dec[d];
      nn::Tensor g(dc.logits.c, h, w);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          const std::size_t p = static_cast<std::size_t>(y) * w + x;
          if (d == 0) {
            for (int k = 0; k < 3; ++k) {
              const float r = nn::sigmoid(dc.logits.channel(k)[p]);
              g.channel(k)[p] = static_cast<float>(grad_r(x, y, k) * r * (1.0f - r));
            }
          } else {
            g.channel(0)[p] = static_cast<float>(grad_gs(x, y) * nn::sigmoid(dc.logits.channel(0)[p]));
          }
        }
      }
      nn::Tensor grad_cat;
      head_[d].backward(store_, dc.final_cat, g, &grad_cat, cache.col);
      nn::Tensor grad_act(dc.act[0].c, h, w);
      std::copy(grad_cat.data.begin(), grad_cat.data.begin() + static_cast<std::ptrdiff_t>(grad_act.data.size()),
                grad_act.data.begin());
      for (int s = 0; s < D; ++s) {
        nn::leaky_relu_backward(dc.act[s], grad_act);
        nn::Tensor grad_in;
        dec_[d][s].backward(store_, dc.cat[s], grad_act, &grad_in, cache.col);
        const int prev_c = dc.cat[s].c - cache.enc_b[s].c;
        nn::add_channels(grad_in, prev_c, grad_skip[s]);
        const nn::Tensor& prev = s + 1 < D ? dc.act[s + 1] : cache.bottleneck;
        nn::Tensor grad_prev(prev.c, prev.h, prev.w);
        nn::upsample2_backward(grad_in, 0, grad_prev);
        if (s + 1 < D) {
          grad_act = std::move(grad_prev);
        } else {
          for (std::size_t i = 0; i < grad_bottleneck.data.size(); ++i) grad_bottleneck.data[i] += grad_prev.data[i];
        }
      }
    }

    // colour head
    std::vector<float> g_logits(3);
    for (int k = 0; k < 3; ++k) {
      const float sp = nn::softplus(cache.color_logits[k]);
      g_logits[k] = sp > kMinColor ? static_cast<float>(grad_c[k] * nn::sigmoid(cache.color_logits[k])) * kColorStep : 0.0f;
    }
    color_skip_.backward(store_, cache.stats, g_logits);
    auto g_hidden = color_out_.backward(store_, cache.hidden, g_logits);
    for (std::size_t i = 0; i < g_hidden.size(); ++i) {
      if (!(cache.hidden_pre[i] > 0.0f)) g_hidden[i] *= nn::kLeakySlope;
    }
    const auto g_gap = color_hidden_.backward(store_, cache.gap, g_hidden);
    const float inv_plane = 1.0f / static_cast<float>(cache.bottleneck.plane());
    for (int k = 0; k < grad_bottleneck.c; ++k) {
      float* p = grad_bottleneck.channel(k);
      for (std::size_t i = 0; i < grad_bottleneck.plane(); ++i) p[i] += g_gap[k] * inv_plane;
    }

    // encoder
    nn::leaky_relu_backward(cache.bottleneck, grad_bottleneck);
    nn::Tensor grad_x;
    bottleneck_.backward(store_, cache.pooled[D - 1], grad_bottleneck, &grad_x, cache.col);
    for (int s = D - 1; s >= 0; --s) {
      nn::Tensor& gb = grad_skip[s];
      nn::avg_pool2_backward(grad_x, gb);
      nn::leaky_relu_backward(cache.enc_b[s], gb);
      nn::Tensor ga;
      enc2_[s].backward(store_, cache.enc_a[s], gb, &ga, cache.col);
      nn::leaky_relu_backward(cache.enc_a[s], ga);
      const nn::Tensor& in = s > 0 ? cache.pooled[s - 1] : cache.input;
      enc1_[s].backward(store_, in, ga, s > 0 ? &grad_x : nullptr, cache.col);
    }
  }

 private:
  // linear RGB followed by log RGB: in the log channels dividing out shading is a subtraction
  static nn::Tensor to_tensor(const LinearImage& img) {
    nn::Tensor t(kInputChannels, img.height(), img.width());
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        for (int k = 0; k < 3; ++k) {
          const float v = img(x, y, k);
          const std::size_t p = static_cast<std::size_t>(y) * img.width() + x;
          t.channel(k)[p] = v;
          // centred on middle gray and scaled to roughly unit range, like the linear channels
          t.channel(3 + k)[p] = 0.25f * std::log((std::max(v, 0.0f) + kLogOffset) / static_cast<float>(kMiddleGray));
        }
    return t;
  }

  int stage_channels(int s) const { return config_.base_channels << s; }

  void build() {
    const int D = config_.depth;
    int in = kInputChannels;
    for (int s = 0; s < D; ++s) {
      const int ch = stage_channels(s);
      enc1_.emplace_back(store_, "encoder." + std::to_string(s) + ".conv1", in, ch, 3);
      enc2_.emplace_back(store_, "encoder." + std::to_string(s) + ".conv2", ch, ch, 3);
      in = ch;
    }
    const int bottleneck_c = stage_channels(D - 1);
    bottleneck_ = nn::Conv2d(store_, "bottleneck", in, bottleneck_c, 3);
    const char* names[2] = {"reflectance", "shading"};
    const int out_c[2] = {3, 1};
    for (int d = 0; d < 2; ++d) {
      dec_[d].resize(D);
      int prev = bottleneck_c;
      for (int s = D - 1; s >= 0; --s) {
        const int ch = stage_channels(s);
        dec_[d][s] = nn::Conv2d(store_, std::string(names[d]) + ".up" + std::to_string(s), prev + ch, ch, 3);
        prev = ch;
      }
      head_[d] = nn::Conv2d(store_, std::string(names[d]) + ".head", prev + kInputChannels, out_c[d], 1);
    }
    color_hidden_ = nn::Dense(store_, "color.hidden", bottleneck_c + kStats, config_.base_channels);
    color_out_ = nn::Dense(store_, "color.out", config_.base_channels, 3);
    color_skip_ = nn::Dense(store_, "color.skip", kStats, 3);
  }

  void initialize() {
    std::mt19937_64 rng(config_.seed);
    for (const auto& c : enc1_) c.init(store_, rng);
    for (const auto& c : enc2_) c.init(store_, rng);
    bottleneck_.init(store_, rng);
    for (int d = 0; d < 2; ++d) {
      for (int s = config_.depth - 1; s >= 0; --s) dec_[d][s].init(store_, rng);
    }
    // biases centre the heads on R = 0.5, GS ~ 0.36 (middle gray / 0.5), c = 1
    head_[0].init(store_, rng, 1.0f, 0.0f);
    head_[1].init(store_, rng, 1.0f, nn::softplus_inverse(0.36f));
    color_hidden_.init(store_, rng);
    // the MLP starts silent and learns a correction to the linear path
    color_out_.init(store_, rng, 0.0f, nn::softplus_inverse(1.0f) / kColorStep);
    // log c_k ~ chroma_k + ln2 * offset, scaled by 1 / softplus'(softplus^-1(1))
    const float g = 1.0f / (nn::sigmoid(nn::softplus_inverse(1.0f)) * kColorStep);
    std::vector<float> w(3 * kStats);
    for (int o = 0; o < 3; ++o) {
      w[kStats * o + o] = g;
      w[kStats * o + 3] = g * std::numbers::ln2_v<float>;
    }
    color_skip_.init(store_, w);
  }

  ModelConfig config_;
  nn::ParamStore store_;
  std::vector<nn::Conv2d> enc1_, enc2_;
  nn::Conv2d bottleneck_;
  std::array<std::vector<nn::Conv2d>, 2> dec_;
  std::array<nn::Conv2d, 2> head_;
  nn::Dense color_hidden_, color_out_, color_skip_;
};

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout: 8-byte magic "RTXCKPT\0", little-endian uint64 header length, JSON
// header, then raw little-endian float32 blocks at the offsets the header lists.

inline constexpr int kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'R', 'T', 'X', 'C', 'K', 'P', 'T', '\0'};

struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct Checkpoint {
  ModelConfig config;
  std::vector<NamedArray> parameters;
  std::uint64_t training_step = 0;
  std::string rng_state;
  std::vector<NamedArray> optimizer_state;
  nlohmann::json metadata = nlohmann::json::object();
};

inline Checkpoint make_checkpoint(const RetinexModel& model) {
  Checkpoint ck;
  ck.config = model.config();
  for (const auto& p : model.params().all()) ck.parameters.push_back(NamedArray{p.name, p.shape, p.value});
  return ck;
}

/// Rebuilds a model and copies parameters, checking names and shapes against the config.
inline RetinexModel model_from_checkpoint(const Checkpoint& ck) {
  RetinexModel model(ck.config);
  auto& params = model.params().all();
  if (params.size() != ck.parameters.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(ck.parameters.size()) + " parameters, config expects " +
                          std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = ck.parameters[i];
    if (src.name != params[i].name || src.shape != params[i].shape || src.data.size() != params[i].value.size()) {
      throw CheckpointError("parameter mismatch at '" + params[i].name + "' (checkpoint has '" + src.name + "')");
    }
    params[i].value = src.data;
  }
  return model;
}

inline void write_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["config"] = ck.config;
  header["training_step"] = ck.training_step;
  header["rng_state"] = ck.rng_state;
  header["metadata"] = ck.metadata;
  std::uint64_t offset = 0;
  auto manifest = [&](const std::vector<NamedArray>& arrays) {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& a : arrays) {
      list.push_back({{"name", a.name}, {"shape", a.shape}, {"dtype", "float32"}, {"offset", offset},
                      {"count", a.data.size()}});
      offset += a.data.size() * 4;
    }
    return list;
  };
  header["parameters"] = manifest(ck.parameters);
  header["optimizer"] = manifest(ck.optimizer_state);
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw SaveError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, 8);
  unsigned char len[8];
  std::uint64_t n = text.size();
  for (int i = 0; i < 8; ++i) len[i] = static_cast<unsigned char>((n >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(len), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  std::vector<unsigned char> buf;
  for (const auto* group : {&ck.parameters, &ck.optimizer_state}) {
    for (const auto& a : *group) {
      buf.resize(a.data.size() * 4);
      for (std::size_t i = 0; i < a.data.size(); ++i) detail::float_to_le_bytes(a.data[i], buf.data() + 4 * i);
      out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    }
  }
  if (!out) throw SaveError("write failed for checkpoint " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::vector<unsigned char> buf;
  try {
    buf = detail::read_all(path);
  } catch (const LoadError& e) {
    throw CheckpointError(e.what());
  }
  if (buf.size() < 16 || std::memcmp(buf.data(), kCheckpointMagic, 8) != 0) {
    throw CheckpointError("not a checkpoint file: " + path.string());
  }
  std::uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= std::uint64_t(buf[8 + i]) << (8 * i);
  if (n > buf.size() - 16) throw CheckpointError("truncated checkpoint header in " + path.string());
  Checkpoint ck;
  std::size_t blob_start = 16 + n;
  try {
    const auto header = nlohmann::json::parse(buf.begin() + 16, buf.begin() + static_cast<std::ptrdiff_t>(16 + n));
    const int version = header.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    header.at("config").get_to(ck.config);
    header.at("training_step").get_to(ck.training_step);
    header.at("rng_state").get_to(ck.rng_state);
    if (header.contains("metadata")) ck.metadata = header.at("metadata");
    auto read_group = [&](const nlohmann::json& list, std::vector<NamedArray>& out) {
      for (const auto& item : list) {
        NamedArray a;
        item.at("name").get_to(a.name);
        item.at("shape").get_to(a.shape);
        if (item.at("dtype").get<std::string>() != "float32") throw CheckpointError("unsupported dtype for " + a.name);
        const auto offset = item.at("offset").get<std::uint64_t>();
        const auto count = item.at("count").get<std::uint64_t>();
        std::uint64_t expect = 1;
        for (int s : a.shape) expect *= static_cast<std::uint64_t>(s);
        if (expect != count) throw CheckpointError("shape/count mismatch for " + a.name);
        if (blob_start + offset + count * 4 > buf.size()) throw CheckpointError("truncated data for " + a.name);
        a.data.resize(count);
        const unsigned char* p = buf.data() + blob_start + offset;
        for (std::uint64_t i = 0; i < count; ++i) a.data[i] = detail::float_from_bytes(p + 4 * i, true);
        out.push_back(std::move(a));
      }
    };
    read_group(header.at("parameters"), ck.parameters);
    read_group(header.at("optimizer"), ck.optimizer_state);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }
  return ck;
}

inline void save_checkpoint(const RetinexModel& model, const std::filesystem::path& path) {
  write_checkpoint(make_checkpoint(model), path);
}

inline RetinexModel load_checkpoint(const std::filesystem::path& path) { return model_from_checkpoint(read_checkpoint(path)); }

/// Loads and insists the stored architecture equals `expected`.
inline RetinexModel load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected) {
  auto ck = read_checkpoint(path);
  if (!(ck.config.input_height == expected.input_height && ck.config.input_width == expected.input_width &&
        ck.config.base_channels == expected.base_channels && ck.config.depth == expected.depth)) {
    throw CheckpointError("checkpoint config does not match the requested model configuration");
  }
  return model_from_checkpoint(ck);
}

}  // namespace retinex
