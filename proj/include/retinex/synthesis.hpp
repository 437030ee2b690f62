#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "retinex/image.hpp"
#include "retinex/image_io.hpp"
#include "retinex/log.hpp"

namespace retinex {

using Rng = std::mt19937_64;

/// Global light-source tint, acting on images as diag(c).
struct IlluminationColor {
  Rgb c{1.0, 1.0, 1.0};

  static IlluminationColor white() { return {}; }
  double operator[](int k) const { return c[static_cast<std::size_t>(k)]; }

  void check() const {
    for (double v : c) {
      if (!std::isfinite(v) || !(v > 0.0)) throw ValidationError("illumination colour components must be finite and > 0");
    }
  }
  friend bool operator==(const IlluminationColor&, const IlluminationColor&) = default;
};

/// Exposure offset in stops; +1 doubles linear pixel values.
struct ExposureValue {
  double v = 0.0;
  friend bool operator==(const ExposureValue&, const ExposureValue&) = default;
};

inline constexpr double kMiddleGray = 0.18;
inline constexpr double kIlluminationLow = 0.9;
inline constexpr double kIlluminationHigh = 1.1;
inline constexpr std::array<double, 3> kTripletExposures{-1.0, 0.0, 1.0};

// ---------------------------------------------------------------------------
// Demosaicing

enum class BayerPattern { RGGB, BGGR, GRBG, GBRG };

inline BayerPattern parse_bayer_pattern(std::string_view s) {
  if (s == "RGGB") return BayerPattern::RGGB;
  if (s == "BGGR") return BayerPattern::BGGR;
  if (s == "GRBG") return BayerPattern::GRBG;
  if (s == "GBRG") return BayerPattern::GBRG;
  throw ValidationError("unknown Bayer pattern '" + std::string(s) + "'");
}

/// Colour index (0=R, 1=G, 2=B) sampled at (x, y) by the 2x2 pattern.
inline int bayer_channel(BayerPattern pattern, int x, int y) {
  static constexpr int layouts[4][4] = {
      {0, 1, 1, 2},  // RGGB
      {2, 1, 1, 0},  // BGGR
      {1, 0, 2, 1},  // GRBG
      {1, 2, 0, 1},  // GBRG
  };
  return layouts[static_cast<int>(pattern)][(y & 1) * 2 + (x & 1)];
}

/// Bilinear demosaic: each missing colour is the mean of the same-colour samples
/// in the 3x3 neighbourhood (neighbours outside the frame are ignored).
inline LinearImage demosaic_bilinear(const Image<float>& mosaic, BayerPattern pattern) {
  if (mosaic.channels() != 1) throw ValidationError("Bayer mosaic must be single-channel");
  const int w = mosaic.width(), h = mosaic.height();
  if (w % 2 != 0 || h % 2 != 0 || w == 0 || h == 0) throw ValidationError("Bayer mosaic dimensions must be even");
  LinearImage out(h, w, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int own = bayer_channel(pattern, x, y);
      std::array<double, 3> sum{};
      std::array<int, 3> count{};
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const int ch = bayer_channel(pattern, nx, ny);
          if (ch == own) continue;
          sum[ch] += mosaic(nx, ny);
          ++count[ch];
        }
      }
      for (int c = 0; c < 3; ++c) {
        out(x, y, c) = c == own ? mosaic(x, y) : static_cast<float>(sum[c] / count[c]);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exposure and colour

/// Scales the image so its geometric-mean luminance becomes middle gray (0.18).
inline LinearImage anchor_exposure(const LinearImage& img, double epsilon = kDefaultLogEpsilon) {
  const double g = geometric_mean_luminance(img, epsilon);
  if (!(g > 2.0 * epsilon)) {
    throw DegenerateInputError("cannot anchor exposure: geometric-mean luminance " + std::to_string(g) +
                               " is at the epsilon floor (black image?)");
  }
  return scaled(img, kMiddleGray / g);
}

inline LinearImage expose(const LinearImage& anchored, ExposureValue ev) {
  if (!std::isfinite(ev.v)) throw ValidationError("exposure value must be finite");
  return scaled(anchored, std::exp2(ev.v));
}

/// Multiplies channel k of every pixel by c_k.
inline LinearImage color_transfer(const LinearImage& img, const IlluminationColor& color) {
  color.check();
  if (img.channels() != 3) throw ShapeError("color_transfer expects an RGB image");
  LinearImage out = img;
  auto d = out.data();
  for (std::size_t p = 0; p < out.pixel_count(); ++p) {
    for (int k = 0; k < 3; ++k) d[3 * p + k] = static_cast<float>(d[3 * p + k] * color.c[k]);
  }
  return out;
}

/// Componentwise i.i.d. uniform on [0.9, 1.1).
inline IlluminationColor sample_illumination(Rng& rng) {
  std::uniform_real_distribution<double> dist(kIlluminationLow, kIlluminationHigh);
  IlluminationColor out;
  for (auto& v : out.c) v = dist(rng);
  return out;
}

// ---------------------------------------------------------------------------
// Triplets

struct TripletView {
  LinearImage image;
  ExposureValue v;
  IlluminationColor c;
};

struct TrainingTriplet {
  std::string scene_id;
  std::array<TripletView, 3> views;
};

struct TripletOptions {
  /// Ablation switch: one colour shared by all three views.
  bool shared_color = false;
  double epsilon = kDefaultLogEpsilon;
};

/// Anchors exposure, then renders the three views at -1, 0, +1 EV, each under
/// its own sampled illumination colour.
inline TrainingTriplet make_triplet(const LinearImage& img, Rng& rng, std::string scene_id,
                                    const TripletOptions& options = {}) {
  const LinearImage anchored = anchor_exposure(img, options.epsilon);
  TrainingTriplet t;
  t.scene_id = std::move(scene_id);
  const IlluminationColor shared = options.shared_color ? sample_illumination(rng) : IlluminationColor{};
  for (std::size_t i = 0; i < 3; ++i) {
    const ExposureValue ev{kTripletExposures[i]};
    const IlluminationColor c = options.shared_color ? shared : sample_illumination(rng);
    t.views[i] = TripletView{color_transfer(expose(anchored, ev), c), ev, c};
  }
  return t;
}

// ---------------------------------------------------------------------------
// Resampling

/// Largest centred crop with the target aspect ratio, then area-averaged resampling.
inline LinearImage center_crop_resize(const LinearImage& img, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw ValidationError("target size must be positive");
  const int h = img.height(), w = img.width();
  if (h == out_h && w == out_w) return img;
  // crop to target aspect
  int crop_w = w, crop_h = h;
  if (static_cast<long long>(w) * out_h > static_cast<long long>(h) * out_w) {
    crop_w = static_cast<int>(static_cast<long long>(h) * out_w / out_h);
  } else {
    crop_h = static_cast<int>(static_cast<long long>(w) * out_h / out_w);
  }
  const int x0 = (w - crop_w) / 2, y0 = (h - crop_h) / 2;
  const double sx = static_cast<double>(crop_w) / out_w, sy = static_cast<double>(crop_h) / out_h;
  LinearImage out(out_h, out_w, img.channels());
  for (int oy = 0; oy < out_h; ++oy) {
    const double fy0 = oy * sy, fy1 = (oy + 1) * sy;
    for (int ox = 0; ox < out_w; ++ox) {
      const double fx0 = ox * sx, fx1 = (ox + 1) * sx;
      std::array<double, 3> acc{};
      double wsum = 0.0;
      for (int iy = static_cast<int>(fy0); iy < static_cast<int>(std::ceil(fy1)) && iy < crop_h; ++iy) {
        const double wy = std::min<double>(iy + 1, fy1) - std::max<double>(iy, fy0);
        if (wy <= 0.0) continue;
        for (int ix = static_cast<int>(fx0); ix < static_cast<int>(std::ceil(fx1)) && ix < crop_w; ++ix) {
          const double wx = std::min<double>(ix + 1, fx1) - std::max<double>(ix, fx0);
          if (wx <= 0.0) continue;
          for (int c = 0; c < img.channels(); ++c) acc[c] += wx * wy * img(x0 + ix, y0 + iy, c);
          wsum += wx * wy;
        }
      }
      for (int c = 0; c < img.channels(); ++c) out(ox, oy, c) = static_cast<float>(acc[c] / wsum);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset manifest

inline constexpr int kManifestFormatVersion = 1;

struct ManifestView {
  std::string path;  // relative to the manifest directory
  double v = 0.0;
  Rgb c{1.0, 1.0, 1.0};
};

struct ManifestEntry {
  std::string scene_id;
  std::string source;
  std::array<ManifestView, 3> views;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  int format_version = kManifestFormatVersion;
  std::vector<ManifestEntry> entries;
  /// Directory the relative view paths resolve against; not serialized.
  std::filesystem::path root;
};

inline void to_json(nlohmann::json& j, const ManifestView& v) {
  j = nlohmann::json{{"path", v.path}, {"v", v.v}, {"c", v.c}};
}
inline void from_json(const nlohmann::json& j, ManifestView& v) {
  j.at("path").get_to(v.path);
  j.at("v").get_to(v.v);
  j.at("c").get_to(v.c);
}
inline void to_json(nlohmann::json& j, const ManifestEntry& e) {
  j = nlohmann::json{{"scene_id", e.scene_id}, {"source", e.source}, {"views", e.views}, {"seed", e.seed}};
}
inline void from_json(const nlohmann::json& j, ManifestEntry& e) {
  j.at("scene_id").get_to(e.scene_id);
  j.at("source").get_to(e.source);
  const auto& views = j.at("views");
  if (!views.is_array() || views.size() != 3) throw ValidationError("manifest entry must have exactly 3 views");
  for (std::size_t i = 0; i < 3; ++i) views[i].get_to(e.views[i]);
  j.at("seed").get_to(e.seed);
}

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  return nlohmann::json{{"format_version", m.format_version}, {"entries", m.entries}};
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw SaveError("cannot write manifest " + path.string());
  out << manifest_to_json(m).dump(2) << '\n';
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open manifest " + path.string());
  DatasetManifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    j.at("format_version").get_to(m.format_version);
    if (m.format_version != kManifestFormatVersion) {
      throw LoadError("unsupported manifest format_version " + std::to_string(m.format_version));
    }
    j.at("entries").get_to(m.entries);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed manifest " + path.string() + ": " + e.what());
  }
  m.root = path.parent_path();
  return m;
}

/// Reads one manifest entry back as a triplet.
inline TrainingTriplet load_triplet(const DatasetManifest& m, const ManifestEntry& e) {
  TrainingTriplet t;
  t.scene_id = e.scene_id;
  for (std::size_t i = 0; i < 3; ++i) {
    t.views[i].image = load_image(m.root / e.views[i].path, ImageFormat::Pfm);
    t.views[i].v = ExposureValue{e.views[i].v};
    t.views[i].c = IlluminationColor{e.views[i].c};
  }
  return t;
}

/// 64-bit FNV-1a; stable across platforms, used to derive per-scene seeds.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t scene_seed(std::uint64_t seed, std::string_view scene_id) { return seed ^ fnv1a64(scene_id); }

struct DatasetOptions {
  int size = 128;
  int triplets_per_source = 1;
  bool shared_color = false;
};

struct DatasetResult {
  DatasetManifest manifest;
  std::vector<std::string> skipped;
};

inline std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  if (!std::filesystem::is_directory(dir)) throw LoadError("not a directory: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (ext == ".pfm" || ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

/// Renders one triplet per source (or several with triplets_per_source > 1),
/// writes view PFMs plus manifest.json into out_dir. Unreadable sources are logged and skipped.
inline DatasetResult build_dataset(const std::filesystem::path& source_dir, const std::filesystem::path& out_dir,
                                   std::uint64_t seed, const DatasetOptions& options = {}) {
  if (options.size < kMinImageSide) throw ValidationError("training size below minimum image side");
  if (options.triplets_per_source < 1) throw ValidationError("triplets_per_source must be >= 1");
  const auto sources = list_images(source_dir);
  if (sources.empty()) throw LoadError("no source images (*.pfm, *.png) in " + source_dir.string());
  std::filesystem::create_directories(out_dir);

  DatasetResult result;
  result.manifest.root = out_dir;
  for (const auto& src : sources) {
    LinearImage img;
    try {
      img = center_crop_resize(load_image(src), options.size, options.size);
      validate(img);
    } catch (const Error& e) {
      log().warn("skipping source {}: {}", src.string(), e.what());
      result.skipped.push_back(src.string());
      continue;
    }
    const std::string stem = src.stem().string();
    for (int k = 0; k < options.triplets_per_source; ++k) {
      const std::string id = options.triplets_per_source == 1 ? stem : stem + "_t" + std::to_string(k);
      ManifestEntry entry;
      entry.scene_id = id;
      entry.source = src.string();
      entry.seed = scene_seed(seed, id);
      Rng rng(entry.seed);
      TrainingTriplet t;
      try {
        t = make_triplet(img, rng, id, TripletOptions{options.shared_color});
      } catch (const DegenerateInputError& e) {
        log().warn("skipping source {}: {}", src.string(), e.what());
        result.skipped.push_back(src.string());
        break;
      }
      for (std::size_t i = 0; i < 3; ++i) {
        const auto& view = t.views[i];
        const std::string name = id + "_v" + std::to_string(static_cast<int>(view.v.v)) + ".pfm";
        save_image(view.image, out_dir / name, ImageFormat::Pfm);
        entry.views[i] = ManifestView{name, view.v.v, view.c.c};
      }
      result.manifest.entries.push_back(std::move(entry));
    }
  }
  if (result.manifest.entries.empty()) throw LoadError("no readable source images in " + source_dir.string());
  save_manifest(result.manifest, out_dir / "manifest.json");
  return result;
}

}  // namespace retinex
