#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "retinex/image_io.hpp"
#include "retinex/log.hpp"
#include "retinex/metrics.hpp"
#include "retinex/model.hpp"
#include "retinex/synthesis.hpp"
#include "retinex/white_balance.hpp"

namespace retinex {

struct PairScore {
  std::string id;
  double mse = 0.0;
  double mean_dH = 0.0;
};

struct MetricReport {
  std::vector<PairScore> per_image;
  double mse = 0.0;
  double mean_dH = 0.0;
  std::size_t count = 0;
  std::size_t failed = 0;
};

inline void to_json(nlohmann::json& j, const PairScore& s) {
  j = nlohmann::json{{"id", s.id}, {"mse", s.mse}, {"mean_dH", s.mean_dH}};
}

inline void to_json(nlohmann::json& j, const MetricReport& r) {
  j = nlohmann::json{{"per_image", r.per_image},
                     {"aggregate", {{"mse", r.mse}, {"mean_dH", r.mean_dH}}},
                     {"count", r.count},
                     {"failed", r.failed}};
}

/// (mse, mean per-pixel hue difference); argument order is (output, reference).
template <class T>
std::pair<double, double> evaluate_pair(const Image<T>& output, const Image<T>& reference) {
  detail::require_rgb_pair(output, reference, "evaluate_pair");
  return {mse(output, reference), mean_hue_difference(output, reference)};
}

inline MetricReport aggregate(std::vector<PairScore> scores) {
  MetricReport r;
  r.per_image = std::move(scores);
  r.count = r.per_image.size();
  if (r.count == 0) return r;
  for (const auto& s : r.per_image) {
    r.mse += s.mse;
    r.mean_dH += s.mean_dH;
  }
  r.mse /= static_cast<double>(r.count);
  r.mean_dH /= static_cast<double>(r.count);
  return r;
}

struct EvalPair {
  std::filesystem::path output;
  std::filesystem::path reference;
};

/// Scores each (output, reference) pair; unreadable or mismatched pairs are
/// logged and left out of the aggregate.
inline MetricReport evaluate_set(const std::vector<EvalPair>& pairs) {
  if (pairs.empty()) throw ValidationError("evaluate_set: no pairs");
  std::vector<PairScore> scores;
  std::size_t failed = 0;
  for (const auto& p : pairs) {
    try {
      const auto [m, dh] = evaluate_pair(load_image(p.output), load_image(p.reference));
      scores.push_back({p.output.filename().string(), m, dh});
    } catch (const Error& e) {
      log().warn("skipping pair {} / {}: {}", p.output.string(), p.reference.string(), e.what());
      ++failed;
    }
  }
  if (scores.empty()) throw LoadError("evaluate_set: every pair failed");
  auto r = aggregate(std::move(scores));
  r.failed = failed;
  return r;
}

/// Pairs file: JSON list of {"output", "reference"}; relative paths resolve
/// against the file's directory.
inline std::vector<EvalPair> load_pairs(const std::filesystem::path& path) {
  const auto j = nlohmann::json::parse(detail::read_all(path), nullptr, false);
  if (j.is_discarded() || !j.is_array()) throw LoadError("pairs file must be a JSON list: " + path.string());
  const auto base = path.parent_path();
  std::vector<EvalPair> out;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("output") || !e.contains("reference")) {
      throw LoadError("pairs entry needs 'output' and 'reference': " + e.dump());
    }
    auto resolve = [&](const std::string& s) {
      std::filesystem::path p(s);
      return p.is_absolute() ? p : base / p;
    };
    out.push_back({resolve(e.at("output").get<std::string>()), resolve(e.at("reference").get<std::string>())});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic ground truth

struct SyntheticScene {
  LinearImage R_gt;
  Image<float> GS_gt;
  IlluminationColor c_gt;
  LinearImage I;

  /// R_gt * GS_gt, the scene under white light.
  LinearImage white_lit() const { return reconstruct(R_gt, compose_shading(GS_gt, IlluminationColor::white())); }
};

inline constexpr double kSceneGsLow = 0.2;
inline constexpr double kSceneGsHigh = 2.0;

/// Voronoi reflectance with low-chroma cell colours in [0.1, 0.9], shading
/// from 2-4 broad radial bumps (scaled so the white-lit scene sits at middle
/// gray, then clamped to [0.2, 2.0]), and a sampled light colour.
inline SyntheticScene synth_scene(Rng& rng, int size, int n_patches) {
  if (size < 16) throw ValidationError("synth_scene: size must be >= 16");
  if (n_patches < 2) throw ValidationError("synth_scene: n_patches must be >= 2");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  struct Site {
    double x, y;
    std::array<float, 3> rgb;
  };
  std::vector<Site> sites(static_cast<std::size_t>(n_patches));
  for (auto& s : sites) {
    s.x = uni(0.0, size);
    s.y = uni(0.0, size);
    const double g = uni(0.12, 0.85);
    for (auto& v : s.rgb) v = static_cast<float>(g * (1.0 + uni(-0.05, 0.05)));
  }

  struct Bump {
    double x, y, sigma, amp;
  };
  const int n_bumps = 2 + static_cast<int>(unit(rng) * 3.0);
  std::vector<Bump> bumps(static_cast<std::size_t>(n_bumps));
  for (auto& b : bumps) b = {uni(-0.25, 1.25) * size, uni(-0.25, 1.25) * size, uni(0.4, 0.9) * size, uni(0.2, 0.6)};
  const double base = uni(0.25, 0.5);

  SyntheticScene s;
  s.R_gt = LinearImage(size, size, 3);
  s.GS_gt = Image<float>(size, size, 1);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      std::size_t best = 0;
      double best_d = 1e300;
      for (std::size_t k = 0; k < sites.size(); ++k) {
        const double d = (px - sites[k].x) * (px - sites[k].x) + (py - sites[k].y) * (py - sites[k].y);
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      for (int c = 0; c < 3; ++c) s.R_gt(x, y, c) = sites[best].rgb[static_cast<std::size_t>(c)];
      double g = base;
      for (const auto& b : bumps) {
        const double r2 = (px - b.x) * (px - b.x) + (py - b.y) * (py - b.y);
        g += b.amp * std::exp(-r2 / (2.0 * b.sigma * b.sigma));
      }
      s.GS_gt(x, y, 0) = static_cast<float>(g);
    }
  }
  // expose the white-lit scene at middle gray, like the anchored training views
  const double k = kMiddleGray / geometric_mean_luminance(reconstruct(s.R_gt, compose_shading(s.GS_gt, IlluminationColor::white())));
  for (auto& v : s.GS_gt.data()) v = static_cast<float>(std::clamp(v * k, kSceneGsLow, kSceneGsHigh));
  s.c_gt = sample_illumination(rng);
  s.I = reconstruct(s.R_gt, compose_shading(s.GS_gt, s.c_gt));
  return s;
}

/// Per-channel least-squares gains a_k minimizing sum (a_k * pred_k - target_k)^2.
template <class T>
Rgb fit_channel_scale(const Image<T>& pred, const Image<T>& target) {
  detail::require_rgb_pair(pred, target, "fit_channel_scale");
  Rgb num{}, den{};
  const auto p = pred.data(), t = target.data();
  for (std::size_t i = 0; i < pred.pixel_count(); ++i) {
    for (int k = 0; k < 3; ++k) {
      num[k] += static_cast<double>(p[3 * i + k]) * t[3 * i + k];
      den[k] += static_cast<double>(p[3 * i + k]) * p[3 * i + k];
    }
  }
  Rgb a{};
  for (int k = 0; k < 3; ++k) a[k] = den[k] > 0.0 ? num[k] / den[k] : 0.0;
  return a;
}

/// MSE after fitting per-channel gains of `pred` onto `target`; reflectance is
/// only recoverable up to such a scale.
template <class T>
double scale_invariant_mse(const Image<T>& pred, const Image<T>& target) {
  const Rgb a = fit_channel_scale(pred, target);
  double acc = 0.0;
  const auto p = pred.data(), t = target.data();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = a[i % 3] * p[i] - t[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

/// Renders the white-lit scene as a training triplet (anchored, EV -1/0/+1,
/// a fresh colour per view), decomposes each view and returns the mean
/// pairwise mean-squared difference between the three reflectance estimates.
template <Decomposer M>
double reflectance_consistency_error(const M& model, const SyntheticScene& scene, Rng& rng) {
  const TrainingTriplet t = make_triplet(scene.white_lit(), rng, "consistency");
  std::array<LinearImage, 3> rs;
  for (std::size_t i = 0; i < 3; ++i) rs[i] = model.decompose(t.views[i].image).R;
  double acc = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) acc += mse(rs[i], rs[j]);
  }
  return acc / 3.0;
}

/// Euclidean distance between two colour vectors.
inline double color_error(const Rgb& a, const Rgb& b) {
  double s = 0.0;
  for (int k = 0; k < 3; ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

}  // namespace retinex
