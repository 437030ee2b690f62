#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace retinex {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// An image or field failed its invariants (non-finite, negative, too small).
struct ValidationError : Error {
  using Error::Error;
};

/// Two arguments disagree in shape.
struct ShapeError : Error {
  using Error::Error;
};

/// Input carries no usable signal, e.g. an all-black image handed to exposure anchoring.
struct DegenerateInputError : Error {
  using Error::Error;
};

using Rgb = std::array<double, 3>;

inline constexpr int kMinImageSide = 8;

/// Dense H x W x C field, interleaved (channels fastest), row-major.
///
/// Used for linear RGB images (C = 3), luminance and gray-shading maps (C = 1)
/// and, with T = double, for loss evaluation.
template <class T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int height, int width, int channels, T fill = T{})
      : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels <= 0) {
      throw ShapeError("invalid image shape " + std::to_string(height) + "x" + std::to_string(width) +
                       "x" + std::to_string(channels));
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }
  const T& operator()(int x, int y, int c = 0) const noexcept { return data_[index(x, y, c)]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  bool same_shape(const Image& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
  }
  template <class U>
  bool same_extent(const Image<U>& other) const noexcept {
    return height_ == other.height() && width_ == other.width();
  }

  template <class U>
  Image<U> cast() const {
    Image<U> out(height_, width_, channels_);
    std::transform(data_.begin(), data_.end(), out.data().begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Image& a, const Image& b) {
    return a.same_shape(b) && a.data_ == b.data_;
  }

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

using LinearImage = Image<float>;
using LuminanceMap = Image<float>;

inline std::string shape_string(int h, int w, int c) {
  return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
}

template <class A, class B>
void require_same_shape(const Image<A>& a, const Image<B>& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width() || a.channels() != b.channels()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.height(), a.width(), a.channels()) +
                     " vs " + shape_string(b.height(), b.width(), b.channels()));
  }
}

/// Throws ValidationError naming the first violated invariant of a LinearImage.
inline void validate(const LinearImage& img) {
  if (img.channels() != 3) {
    throw ValidationError("expected 3 channels, got " + std::to_string(img.channels()));
  }
  if (img.height() < kMinImageSide || img.width() < kMinImageSide) {
    throw ValidationError("image " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                          " is smaller than the minimum " + std::to_string(kMinImageSide) + "x" +
                          std::to_string(kMinImageSide));
  }
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = img(x, y, c);
        if (!std::isfinite(v)) {
          throw ValidationError("non-finite value at pixel (" + std::to_string(x) + "," + std::to_string(y) +
                                ") channel " + std::to_string(c));
        }
        if (v < 0.0f) {
          throw ValidationError("negative value at pixel (" + std::to_string(x) + "," + std::to_string(y) +
                                ") channel " + std::to_string(c));
        }
      }
    }
  }
}

inline constexpr Rgb kLuminanceWeights{0.2126, 0.7152, 0.0722};

template <class T>
constexpr T luminance_of(T r, T g, T b) {
  return static_cast<T>(kLuminanceWeights[0]) * r + static_cast<T>(kLuminanceWeights[1]) * g +
         static_cast<T>(kLuminanceWeights[2]) * b;
}

/// Rec.709 luminance of every pixel.
inline LuminanceMap luminance(const LinearImage& img) {
  validate(img);
  LuminanceMap out(img.height(), img.width(), 1);
  const auto src = img.data();
  auto dst = out.data();
  for (std::size_t p = 0; p < out.size(); ++p) {
    dst[p] = luminance_of(src[3 * p], src[3 * p + 1], src[3 * p + 2]);
  }
  return out;
}

inline constexpr double kDefaultLogEpsilon = 1e-6;

/// exp(mean(log(v + epsilon))) over raw luminance samples.
inline double geometric_mean(std::span<const double> values, double epsilon) {
  if (values.empty()) throw ValidationError("geometric mean of an empty set");
  double acc = 0.0;
  for (double v : values) acc += std::log(v + epsilon);
  return std::exp(acc / static_cast<double>(values.size()));
}

/// exp(mean(log(Y + epsilon))); always strictly positive for epsilon > 0.
inline double geometric_mean_luminance(const LinearImage& img, double epsilon = kDefaultLogEpsilon) {
  validate(img);
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
    throw ValidationError("epsilon must be finite and non-negative");
  }
  const auto src = img.data();
  double acc = 0.0;
  const std::size_t n = img.pixel_count();
  for (std::size_t p = 0; p < n; ++p) {
    const double y = luminance_of<double>(src[3 * p], src[3 * p + 1], src[3 * p + 2]);
    acc += std::log(y + epsilon);
  }
  return std::exp(acc / static_cast<double>(n));
}

/// Scales every sample by `factor`.
template <class T>
Image<T> scaled(const Image<T>& img, double factor) {
  Image<T> out = img;
  for (auto& v : out.data()) v = static_cast<T>(v * factor);
  return out;
}

/// Mirror image around the vertical axis.
template <class T>
Image<T> flip_horizontal(const Image<T>& img) {
  Image<T> out(img.height(), img.width(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) out(img.width() - 1 - x, y, c) = img(x, y, c);
  return out;
}

}  // namespace retinex
