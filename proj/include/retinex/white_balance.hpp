#pragma once

#include <concepts>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "retinex/image_io.hpp"
#include "retinex/log.hpp"
#include "retinex/model.hpp"
#include "retinex/synthesis.hpp"

namespace retinex {

/// Anything that splits a linear image into (R, GS, c).
template <class M>
concept Decomposer = requires(const M& m, const LinearImage& img) {
  { m.decompose(img) } -> std::convertible_to<Decomposition>;
};

struct WhiteBalanceResult {
  LinearImage output;
  IlluminationColor estimated_c;
};

struct WhiteBalanceOptions {
  /// Rescale the output so its geometric-mean luminance matches the input's.
  bool reanchor = false;
};

/// Reconstructs from R and GS under white light; the estimated colour is
/// returned for inspection only.
template <Decomposer M>
WhiteBalanceResult white_balance(const M& model, const LinearImage& img, const WhiteBalanceOptions& options = {}) {
  const Decomposition d = model.decompose(img);
  WhiteBalanceResult out{reconstruct(d.R, compose_shading(d.GS, IlluminationColor::white())), d.c};
  if (options.reanchor) {
    const double gi = geometric_mean_luminance(img);
    const double go = geometric_mean_luminance(out.output);
    if (go > 0.0) out.output = scaled(out.output, gi / go);
  }
  return out;
}

struct WhiteBalanceRecord {
  std::string input;
  std::string output;
  Rgb c_hat{};
};

inline void to_json(nlohmann::json& j, const WhiteBalanceRecord& r) {
  j = nlohmann::json{{"input", r.input}, {"output", r.output}, {"c_hat", r.c_hat}};
}

struct BatchWhiteBalanceSummary {
  std::vector<WhiteBalanceRecord> records;
  std::vector<std::string> failed;
};

/// Runs white_balance over every image in input_dir, writing <stem>_wb.pfm
/// (and <stem>_wb.png when export_png is set) plus summary.json into out_dir.
template <Decomposer M>
BatchWhiteBalanceSummary batch_white_balance(const M& model, const std::filesystem::path& input_dir,
                                             const std::filesystem::path& out_dir,
                                             const WhiteBalanceOptions& options = {}, bool export_png = false) {
  const auto inputs = list_images(input_dir);
  if (inputs.empty()) throw LoadError("no input images (*.pfm, *.png) in " + input_dir.string());
  std::filesystem::create_directories(out_dir);
  BatchWhiteBalanceSummary summary;
  for (const auto& path : inputs) {
    try {
      const auto res = white_balance(model, load_image(path), options);
      const auto name = path.stem().string() + "_wb.pfm";
      save_image(res.output, out_dir / name, ImageFormat::Pfm);
      if (export_png) save_image(res.output, out_dir / (path.stem().string() + "_wb.png"), ImageFormat::Png16);
      summary.records.push_back({path.filename().string(), name, res.estimated_c.c});
    } catch (const Error& e) {
      log().warn("white balance failed for {}: {}", path.string(), e.what());
      summary.failed.push_back(path.string());
    }
  }
  std::ofstream f(out_dir / "summary.json");
  if (!f) throw SaveError("cannot write " + (out_dir / "summary.json").string());
  f << nlohmann::json(summary.records).dump(2) << '\n';
  if (!f) throw SaveError("cannot write " + (out_dir / "summary.json").string());
  return summary;
}

}  // namespace retinex
