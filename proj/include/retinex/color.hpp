#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include "retinex/dual.hpp"
#include "retinex/image.hpp"

namespace retinex {

template <class T = double>
struct LabColor {
  T L{};
  T a{};
  T b{};
};

/// Linear Rec.709 RGB to CIE XYZ (D65).
inline constexpr double kRgbToXyz[3][3] = {
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
};

// The reference white is the image of RGB (1,1,1) so white maps to a = b = 0 exactly.
inline constexpr Rgb kWhiteXyz{
    kRgbToXyz[0][0] + kRgbToXyz[0][1] + kRgbToXyz[0][2],
    kRgbToXyz[1][0] + kRgbToXyz[1][1] + kRgbToXyz[1][2],
    kRgbToXyz[2][0] + kRgbToXyz[2][1] + kRgbToXyz[2][2],
};

namespace detail {

inline constexpr double kLabDelta = 6.0 / 29.0;

template <class T>
T lab_f(const T& t) {
  using std::cbrt;
  constexpr double d3 = kLabDelta * kLabDelta * kLabDelta;
  if (t > T(d3)) return cbrt(t);
  return t / T(3.0 * kLabDelta * kLabDelta) + T(4.0 / 29.0);
}

template <class T>
T clip01(const T& x) {
  if (x < T(0.0)) return T(0.0);
  if (x > T(1.0)) return T(1.0);
  return x;
}

}  // namespace detail

/// Linear RGB to CIELAB (D65). Components are clipped to [0,1] first; inside a
/// dual-number evaluation the clip passes derivatives through only in-gamut.
template <class T>
LabColor<T> linear_to_lab(const T& r_in, const T& g_in, const T& b_in) {
  const T r = detail::clip01(r_in);
  const T g = detail::clip01(g_in);
  const T b = detail::clip01(b_in);
  const T x = T(kRgbToXyz[0][0]) * r + T(kRgbToXyz[0][1]) * g + T(kRgbToXyz[0][2]) * b;
  const T y = T(kRgbToXyz[1][0]) * r + T(kRgbToXyz[1][1]) * g + T(kRgbToXyz[1][2]) * b;
  const T z = T(kRgbToXyz[2][0]) * r + T(kRgbToXyz[2][1]) * g + T(kRgbToXyz[2][2]) * b;
  const T fx = detail::lab_f(x / T(kWhiteXyz[0]));
  const T fy = detail::lab_f(y / T(kWhiteXyz[1]));
  const T fz = detail::lab_f(z / T(kWhiteXyz[2]));
  return {T(116.0) * fy - T(16.0), T(500.0) * (fx - fy), T(200.0) * (fy - fz)};
}

inline LabColor<double> linear_to_lab(const Rgb& rgb) {
  for (double v : rgb) {
    if (!std::isfinite(v)) throw ValidationError("non-finite RGB component in Lab conversion");
  }
  return linear_to_lab<double>(rgb[0], rgb[1], rgb[2]);
}

/// CIEDE2000 result with the intermediates needed by callers that report the hue term.
template <class T>
struct DeltaE2000 {
  T delta_e{};
  T delta_L{};  // ΔL'
  T delta_C{};  // ΔC'
  T delta_H{};  // ΔH' (signed)
};

/// Full CIEDE2000 with kL = kC = kH = 1.
template <class T>
DeltaE2000<T> ciede2000_terms(const LabColor<T>& x, const LabColor<T>& y) {
  using std::abs;
  using std::atan2;
  using std::cos;
  using std::exp;
  using std::sin;
  using std::sqrt;
  constexpr double pi = std::numbers::pi;
  constexpr double deg = pi / 180.0;
  constexpr double pow25_7 = 6103515625.0;

  const T c1 = sqrt(x.a * x.a + x.b * x.b);
  const T c2 = sqrt(y.a * y.a + y.b * y.b);
  const T c_bar = (c1 + c2) * T(0.5);
  const T c_bar2 = c_bar * c_bar;
  const T c_bar7 = c_bar2 * c_bar2 * c_bar2 * c_bar;
  const T g = T(0.5) * (T(1.0) - sqrt(c_bar7 / (c_bar7 + T(pow25_7))));

  const T a1p = (T(1.0) + g) * x.a;
  const T a2p = (T(1.0) + g) * y.a;
  const T c1p = sqrt(a1p * a1p + x.b * x.b);
  const T c2p = sqrt(a2p * a2p + y.b * y.b);

  auto hue = [&](const T& b, const T& ap) {
    if (value_of(b) == 0.0 && value_of(ap) == 0.0) return T(0.0);
    T h = atan2(b, ap);
    if (h < T(0.0)) h += T(2.0 * pi);
    return h;
  };
  const T h1p = hue(x.b, a1p);
  const T h2p = hue(y.b, a2p);

  const T dLp = y.L - x.L;
  const T dCp = c2p - c1p;
  const bool chromatic = value_of(c1p) * value_of(c2p) != 0.0;
  T dhp(0.0);
  if (chromatic) {
    dhp = h2p - h1p;
    if (dhp > T(pi)) {
      dhp -= T(2.0 * pi);
    } else if (dhp < T(-pi)) {
      dhp += T(2.0 * pi);
    }
  }
  const T dHp = T(2.0) * sqrt(c1p * c2p) * sin(dhp * T(0.5));

  const T L_bar = (x.L + y.L) * T(0.5);
  const T cp_bar = (c1p + c2p) * T(0.5);
  T hp_bar = h1p + h2p;
  if (chromatic) {
    if (abs(h1p - h2p) <= T(pi)) {
      hp_bar = hp_bar * T(0.5);
    } else if (hp_bar < T(2.0 * pi)) {
      hp_bar = (hp_bar + T(2.0 * pi)) * T(0.5);
    } else {
      hp_bar = (hp_bar - T(2.0 * pi)) * T(0.5);
    }
  }

  const T t = T(1.0) - T(0.17) * cos(hp_bar - T(30.0 * deg)) + T(0.24) * cos(T(2.0) * hp_bar) +
              T(0.32) * cos(T(3.0) * hp_bar + T(6.0 * deg)) - T(0.20) * cos(T(4.0) * hp_bar - T(63.0 * deg));
  const T h_arg = (hp_bar / T(deg) - T(275.0)) / T(25.0);
  const T d_theta = T(30.0 * deg) * exp(-(h_arg * h_arg));
  const T cp_bar2 = cp_bar * cp_bar;
  const T cp_bar7 = cp_bar2 * cp_bar2 * cp_bar2 * cp_bar;
  const T r_c = T(2.0) * sqrt(cp_bar7 / (cp_bar7 + T(pow25_7)));
  const T l50 = (L_bar - T(50.0)) * (L_bar - T(50.0));
  const T s_l = T(1.0) + T(0.015) * l50 / sqrt(T(20.0) + l50);
  const T s_c = T(1.0) + T(0.045) * cp_bar;
  const T s_h = T(1.0) + T(0.015) * cp_bar * t;
  const T r_t = -sin(T(2.0) * d_theta) * r_c;

  const T tl = dLp / s_l;
  const T tc = dCp / s_c;
  const T th = dHp / s_h;
  const T sum = tl * tl + tc * tc + th * th + r_t * tc * th;
  return {sqrt(sum), dLp, dCp, dHp};
}

template <class T>
T ciede2000(const LabColor<T>& x, const LabColor<T>& y) {
  return ciede2000_terms(x, y).delta_e;
}

/// |ΔH'| from the CIEDE2000 intermediates.
template <class T>
T hue_difference(const LabColor<T>& x, const LabColor<T>& y) {
  using std::abs;
  return abs(ciede2000_terms(x, y).delta_H);
}

}  // namespace retinex
