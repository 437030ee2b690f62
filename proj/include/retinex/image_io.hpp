#pragma once

#include <png.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "retinex/image.hpp"

namespace retinex {

struct LoadError : Error {
  using Error::Error;
};

struct SaveError : Error {
  using Error::Error;
};

enum class ImageFormat { Pfm, Png16 };

inline ImageFormat format_from_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (ext == ".pfm") return ImageFormat::Pfm;
  if (ext == ".png") return ImageFormat::Png16;
  throw LoadError("unrecognized image extension '" + ext + "' for " + path.string());
}

namespace detail {

inline float float_from_bytes(const unsigned char* p, bool little_endian) {
  std::uint32_t bits = 0;
  if (little_endian) {
    bits = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
  } else {
    bits = std::uint32_t(p[3]) | (std::uint32_t(p[2]) << 8) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[0]) << 24);
  }
  return std::bit_cast<float>(bits);
}

inline void float_to_le_bytes(float v, unsigned char* p) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  p[0] = static_cast<unsigned char>(bits & 0xff);
  p[1] = static_cast<unsigned char>((bits >> 8) & 0xff);
  p[2] = static_cast<unsigned char>((bits >> 16) & 0xff);
  p[3] = static_cast<unsigned char>((bits >> 24) & 0xff);
}

// Reads one whitespace-delimited header token; PFM headers allow any whitespace between fields.
inline std::string pfm_token(const std::vector<unsigned char>& buf, std::size_t& pos, const char* field) {
  while (pos < buf.size() && std::isspace(buf[pos])) ++pos;
  std::string tok;
  while (pos < buf.size() && !std::isspace(buf[pos])) tok.push_back(static_cast<char>(buf[pos++]));
  if (tok.empty()) throw LoadError(std::string("malformed PFM header: missing ") + field);
  return tok;
}

inline std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace detail

/// Reads a PFM ("PF" colour or "Pf" grayscale) into a float field, any channel count.
inline Image<float> load_pfm_field(const std::filesystem::path& path) {
  const auto buf = detail::read_all(path);
  std::size_t pos = 0;
  const auto magic = detail::pfm_token(buf, pos, "magic");
  int channels = 0;
  if (magic == "PF") {
    channels = 3;
  } else if (magic == "Pf") {
    channels = 1;
  } else {
    throw LoadError("malformed PFM header: bad magic '" + magic + "' in " + path.string());
  }
  auto parse_int = [&](const char* field) {
    const auto tok = detail::pfm_token(buf, pos, field);
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || v <= 0) throw LoadError(std::string("malformed PFM header: invalid ") + field);
    return v;
  };
  const int width = parse_int("width");
  const int height = parse_int("height");
  const auto scale_tok = detail::pfm_token(buf, pos, "scale");
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    throw LoadError("malformed PFM header: invalid scale");
  }
  if (scale == 0.0 || !std::isfinite(scale)) throw LoadError("malformed PFM header: invalid scale");
  // exactly one whitespace byte separates the header from the raster
  if (pos >= buf.size() || !std::isspace(buf[pos])) throw LoadError("malformed PFM header: missing raster separator");
  ++pos;

  const bool little_endian = scale < 0.0;
  const std::size_t need = static_cast<std::size_t>(width) * height * channels * 4;
  if (buf.size() - pos < need) {
    throw LoadError("truncated PFM raster in " + path.string() + ": expected " + std::to_string(need) + " bytes, got " +
                    std::to_string(buf.size() - pos));
  }
  Image<float> img(height, width, channels);
  const unsigned char* raster = buf.data() + pos;
  for (int row = 0; row < height; ++row) {
    const int y = height - 1 - row;  // stored bottom-to-top
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < channels; ++c) {
        img(x, y, c) = detail::float_from_bytes(raster, little_endian);
        raster += 4;
      }
    }
  }
  return img;
}

inline void save_pfm_field(const Image<float>& img, const std::filesystem::path& path) {
  if (img.channels() != 1 && img.channels() != 3) throw SaveError("PFM supports 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SaveError("cannot open " + path.string() + " for writing");
  const char* magic = img.channels() == 3 ? "PF" : "Pf";
  out << magic << '\n' << img.width() << ' ' << img.height() << '\n' << "-1.0" << '\n';
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width()) * img.channels() * 4);
  for (int r = 0; r < img.height(); ++r) {
    const int y = img.height() - 1 - r;
    unsigned char* p = row.data();
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < img.channels(); ++c) {
        detail::float_to_le_bytes(img(x, y, c), p);
        p += 4;
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw SaveError("write failed for " + path.string());
}

namespace detail {

struct PngReadState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadState() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct PngWriteState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteState() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

[[noreturn]] inline void png_error_fn(png_structp png, png_const_charp msg) {
  auto* err = static_cast<std::string*>(png_get_error_ptr(png));
  if (err) *err = msg;
  png_longjmp(png, 1);
}

inline void png_warning_fn(png_structp, png_const_charp) {}

// libpng reports errors through longjmp, so this routine keeps only trivially
// destructible locals between setjmp and the calls that may jump.
inline bool png_read_rows(std::FILE* fp, PngReadState& st, std::string& err, png_uint_32& w, png_uint_32& h,
                          int& bit_depth, int& color_type, std::vector<unsigned char>& pixels,
                          std::vector<png_bytep>& rows) {
  st.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!st.png) return false;
  st.info = png_create_info_struct(st.png);
  if (!st.info) return false;
  if (setjmp(png_jmpbuf(st.png))) return false;
  png_init_io(st.png, fp);
  png_read_info(st.png, st.info);
  w = png_get_image_width(st.png, st.info);
  h = png_get_image_height(st.png, st.info);
  bit_depth = png_get_bit_depth(st.png, st.info);
  color_type = png_get_color_type(st.png, st.info);
  if (bit_depth != 16) return true;
  if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(st.png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(st.png);
  png_read_update_info(st.png, st.info);
  const std::size_t rowbytes = png_get_rowbytes(st.png, st.info);
  pixels.resize(rowbytes * h);
  rows.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + y * rowbytes;
  png_read_image(st.png, rows.data());
  png_read_end(st.png, nullptr);
  return true;
}

inline bool png_write_rows(std::FILE* fp, PngWriteState& st, std::string& err, png_uint_32 w, png_uint_32 h,
                           std::vector<unsigned char>& pixels) {
  st.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
  if (!st.png) return false;
  st.info = png_create_info_struct(st.png);
  if (!st.info) return false;
  if (setjmp(png_jmpbuf(st.png))) return false;
  png_init_io(st.png, fp);
  png_set_IHDR(st.png, st.info, w, h, 16, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(st.png, st.info);
  const std::size_t rowbytes = static_cast<std::size_t>(w) * 6;
  for (png_uint_32 y = 0; y < h; ++y) png_write_row(st.png, pixels.data() + y * rowbytes);
  png_write_end(st.png, nullptr);
  return true;
}

}  // namespace detail

/// 16-bit PNG, samples divided by 65535 and treated as linear.
inline LinearImage load_png16(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw LoadError("cannot open " + path.string());
  detail::PngReadState st;
  std::string err;
  png_uint_32 w = 0, h = 0;
  int bit_depth = 0, color_type = 0;
  std::vector<unsigned char> pixels;
  std::vector<png_bytep> rows;
  if (!detail::png_read_rows(fp.get(), st, err, w, h, bit_depth, color_type, pixels, rows)) {
    throw LoadError("malformed PNG " + path.string() + (err.empty() ? "" : ": " + err));
  }
  if (bit_depth != 16) {
    throw LoadError("PNG bit depth is " + std::to_string(bit_depth) + ", expected 16 in " + path.string());
  }
  LinearImage img(static_cast<int>(h), static_cast<int>(w), 3);
  const unsigned char* p = pixels.data();
  for (png_uint_32 y = 0; y < h; ++y) {
    for (png_uint_32 x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const unsigned v = (unsigned(p[0]) << 8) | unsigned(p[1]);  // network byte order
        img(static_cast<int>(x), static_cast<int>(y), c) = static_cast<float>(v / 65535.0);
        p += 2;
      }
    }
  }
  return img;
}

/// Values are clipped to [0, 1] and rounded to the nearest 16-bit code.
inline void save_png16(const LinearImage& img, const std::filesystem::path& path) {
  if (img.channels() != 3) throw SaveError("PNG export expects 3 channels");
  std::vector<unsigned char> pixels(img.size() * 2);
  unsigned char* p = pixels.data();
  for (float v : img.data()) {
    const double clipped = std::clamp(static_cast<double>(v), 0.0, 1.0);
    const auto q = static_cast<unsigned>(std::lround(clipped * 65535.0));
    *p++ = static_cast<unsigned char>(q >> 8);
    *p++ = static_cast<unsigned char>(q & 0xff);
  }
  std::unique_ptr<std::FILE, detail::FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw SaveError("cannot open " + path.string() + " for writing");
  detail::PngWriteState st;
  std::string err;
  if (!detail::png_write_rows(fp.get(), st, err, static_cast<png_uint_32>(img.width()),
                              static_cast<png_uint_32>(img.height()), pixels)) {
    throw SaveError("PNG encode failed for " + path.string() + (err.empty() ? "" : ": " + err));
  }
}

/// Loads a linear RGB image and checks its invariants; violations surface as LoadError.
inline LinearImage load_image(const std::filesystem::path& path, ImageFormat format) {
  LinearImage img = format == ImageFormat::Pfm ? load_pfm_field(path) : load_png16(path);
  if (img.channels() != 3) throw LoadError("expected an RGB image in " + path.string());
  try {
    validate(img);
  } catch (const ValidationError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  return img;
}

inline LinearImage load_image(const std::filesystem::path& path) { return load_image(path, format_from_path(path)); }

inline void save_image(const LinearImage& img, const std::filesystem::path& path, ImageFormat format) {
  validate(img);
  if (format == ImageFormat::Pfm) {
    save_pfm_field(img, path);
  } else {
    save_png16(img, path);
  }
}

inline void save_image(const LinearImage& img, const std::filesystem::path& path) {
  save_image(img, path, format_from_path(path));
}

}  // namespace retinex
