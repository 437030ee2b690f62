#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "retinex/color.hpp"
#include "retinex/image.hpp"

namespace retinex {

struct SsimParams {
  int window_size = 11;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  void check() const {
    if (window_size < 3 || window_size % 2 == 0) throw ValidationError("SSIM window must be odd and >= 3");
    if (!(k1 > 0.0) || !(k2 > 0.0)) throw ValidationError("SSIM constants must be positive");
    if (!(dynamic_range > 0.0)) throw ValidationError("SSIM dynamic range must be positive");
  }
};

namespace detail {

template <class T>
void require_rgb_pair(const Image<T>& a, const Image<T>& b, const char* what) {
  require_same_shape(a, b, what);
  if (a.channels() != 3) throw ShapeError(std::string(what) + ": expected 3-channel images");
  if (a.empty()) throw ShapeError(std::string(what) + ": empty images");
}

template <class T>
std::vector<LabColor<double>> to_lab(const Image<T>& img) {
  std::vector<LabColor<double>> out(img.pixel_count());
  const auto d = img.data();
  for (std::size_t p = 0; p < out.size(); ++p) {
    out[p] = linear_to_lab<double>(d[3 * p], d[3 * p + 1], d[3 * p + 2]);
  }
  return out;
}

template <class T>
std::vector<double> luma(const Image<T>& img) {
  std::vector<double> out(img.pixel_count());
  const auto d = img.data();
  for (std::size_t p = 0; p < out.size(); ++p) {
    out[p] = luminance_of<double>(d[3 * p], d[3 * p + 1], d[3 * p + 2]);
  }
  return out;
}

// Summed-area table with a zero border: sat[(y+1)*(w+1) + (x+1)] = sum over [0,x]x[0,y].
inline std::vector<double> summed_area(const std::vector<double>& v, int w, int h) {
  std::vector<double> sat(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  for (int y = 0; y < h; ++y) {
    double row = 0.0;
    for (int x = 0; x < w; ++x) {
      row += v[static_cast<std::size_t>(y) * w + x];
      sat[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] = sat[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
    }
  }
  return sat;
}

inline double box_sum(const std::vector<double>& sat, int w, int x0, int y0, int x1, int y1) {
  // inclusive-exclusive box [x0,x1) x [y0,y1)
  const auto W = static_cast<std::size_t>(w + 1);
  return sat[y1 * W + x1] - sat[y0 * W + x1] - sat[y1 * W + x0] + sat[y0 * W + x0];
}

struct SsimWindows {
  int nx = 0;
  int ny = 0;
  std::vector<double> mu_x, mu_y, var_x, var_y, cov;
};

inline SsimWindows ssim_windows(const std::vector<double>& x, const std::vector<double>& y, int w, int h, int win) {
  std::vector<double> xx(x.size()), yy(y.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto sx = summed_area(x, w, h), sy = summed_area(y, w, h);
  const auto sxx = summed_area(xx, w, h), syy = summed_area(yy, w, h), sxy = summed_area(xy, w, h);
  SsimWindows s;
  s.nx = w - win + 1;
  s.ny = h - win + 1;
  const std::size_t m = static_cast<std::size_t>(s.nx) * s.ny;
  s.mu_x.resize(m);
  s.mu_y.resize(m);
  s.var_x.resize(m);
  s.var_y.resize(m);
  s.cov.resize(m);
  const double n = static_cast<double>(win) * win;
  for (int v = 0; v < s.ny; ++v) {
    for (int u = 0; u < s.nx; ++u) {
      const std::size_t k = static_cast<std::size_t>(v) * s.nx + u;
      const double mx = box_sum(sx, w, u, v, u + win, v + win) / n;
      const double my = box_sum(sy, w, u, v, u + win, v + win) / n;
      s.mu_x[k] = mx;
      s.mu_y[k] = my;
      s.var_x[k] = box_sum(sxx, w, u, v, u + win, v + win) / n - mx * mx;
      s.var_y[k] = box_sum(syy, w, u, v, u + win, v + win) / n - my * my;
      s.cov[k] = box_sum(sxy, w, u, v, u + win, v + win) / n - mx * my;
    }
  }
  return s;
}

}  // namespace detail

/// Mean CIEDE2000 colour difference over pixels (clip-then-convert to Lab).
template <class T>
double mean_delta_e(const Image<T>& a, const Image<T>& b) {
  detail::require_rgb_pair(a, b, "mean_delta_e");
  const auto la = detail::to_lab(a), lb = detail::to_lab(b);
  double acc = 0.0;
  for (std::size_t p = 0; p < la.size(); ++p) acc += ciede2000(la[p], lb[p]);
  return acc / static_cast<double>(la.size());
}

/// Mean |ΔH'| of CIEDE2000 over pixels.
template <class T>
double mean_hue_difference(const Image<T>& a, const Image<T>& b) {
  detail::require_rgb_pair(a, b, "mean_hue_difference");
  const auto la = detail::to_lab(a), lb = detail::to_lab(b);
  double acc = 0.0;
  for (std::size_t p = 0; p < la.size(); ++p) acc += hue_difference(la[p], lb[p]);
  return acc / static_cast<double>(la.size());
}

template <class T>
double mse(const Image<T>& a, const Image<T>& b) {
  require_same_shape(a, b, "mse");
  if (a.empty()) throw ShapeError("mse: empty images");
  const auto da = a.data(), db = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = static_cast<double>(da[i]) - static_cast<double>(db[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(da.size());
}

/// Mean SSIM over a uniform window sliding (stride 1, valid) on the luminance channel.
template <class T>
double ssim(const Image<T>& a, const Image<T>& b, const SsimParams& params = {}) {
  params.check();
  detail::require_rgb_pair(a, b, "ssim");
  const int win = params.window_size;
  if (a.width() < win || a.height() < win) throw ShapeError("ssim: image smaller than window");
  const double c1 = (params.k1 * params.dynamic_range) * (params.k1 * params.dynamic_range);
  const double c2 = (params.k2 * params.dynamic_range) * (params.k2 * params.dynamic_range);
  const auto s = detail::ssim_windows(detail::luma(a), detail::luma(b), a.width(), a.height(), win);
  double acc = 0.0;
  for (std::size_t k = 0; k < s.mu_x.size(); ++k) {
    const double num = (2.0 * s.mu_x[k] * s.mu_y[k] + c1) * (2.0 * s.cov[k] + c2);
    const double den = (s.mu_x[k] * s.mu_x[k] + s.mu_y[k] * s.mu_y[k] + c1) * (s.var_x[k] + s.var_y[k] + c2);
    acc += num / den;
  }
  return acc / static_cast<double>(s.mu_x.size());
}

/// SSIM value and its gradient with respect to every RGB sample of `b` (`a` held fixed).
inline double ssim_with_grad(const Image<double>& a, const Image<double>& b, Image<double>& grad_b,
                             const SsimParams& params = {}) {
  params.check();
  detail::require_rgb_pair(a, b, "ssim");
  const int win = params.window_size;
  const int w = a.width(), h = a.height();
  if (w < win || h < win) throw ShapeError("ssim: image smaller than window");
  const double c1 = (params.k1 * params.dynamic_range) * (params.k1 * params.dynamic_range);
  const double c2 = (params.k2 * params.dynamic_range) * (params.k2 * params.dynamic_range);
  const auto x = detail::luma(a), y = detail::luma(b);
  const auto s = detail::ssim_windows(x, y, w, h, win);
  const double n = static_cast<double>(win) * win;
  const std::size_t m = s.mu_x.size();

  // per-window coefficients of dS_w/dy_p = alpha + beta * x_p + gamma * y_p
  std::vector<double> alpha(m), beta(m), gamma(m);
  double acc = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double a1 = 2.0 * s.mu_x[k] * s.mu_y[k] + c1;
    const double a2 = 2.0 * s.cov[k] + c2;
    const double b1 = s.mu_x[k] * s.mu_x[k] + s.mu_y[k] * s.mu_y[k] + c1;
    const double b2 = s.var_x[k] + s.var_y[k] + c2;
    const double sv = a1 * a2 / (b1 * b2);
    acc += sv;
    const double d_mu_y = sv * (2.0 * s.mu_x[k] / a1 - 2.0 * s.mu_y[k] / b1);
    const double d_var_y = -sv / b2;
    const double d_cov = 2.0 * sv / a2;
    alpha[k] = (d_mu_y - 2.0 * s.mu_y[k] * d_var_y - s.mu_x[k] * d_cov) / n;
    beta[k] = d_cov / n;
    gamma[k] = 2.0 * d_var_y / n;
  }
  const auto sa = detail::summed_area(alpha, s.nx, s.ny);
  const auto sb = detail::summed_area(beta, s.nx, s.ny);
  const auto sg = detail::summed_area(gamma, s.nx, s.ny);

  grad_b = Image<double>(h, w, 3);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (int py = 0; py < h; ++py) {
    const int v0 = std::max(0, py - win + 1), v1 = std::min(s.ny - 1, py) + 1;
    for (int px = 0; px < w; ++px) {
      const int u0 = std::max(0, px - win + 1), u1 = std::min(s.nx - 1, px) + 1;
      const std::size_t p = static_cast<std::size_t>(py) * w + px;
      double g = 0.0;
      if (u0 < u1 && v0 < v1) {
        g = detail::box_sum(sa, s.nx, u0, v0, u1, v1) + x[p] * detail::box_sum(sb, s.nx, u0, v0, u1, v1) +
            y[p] * detail::box_sum(sg, s.nx, u0, v0, u1, v1);
      }
      g *= inv_m;
      for (int c = 0; c < 3; ++c) grad_b(px, py, c) = g * kLuminanceWeights[c];
    }
  }
  return acc * inv_m;
}

/// Anisotropic L1 total variation: mean |horizontal difference| plus mean
/// |vertical difference|, each averaged over its own valid positions and all channels.
template <class T>
double total_variation(const Image<T>& f) {
  if (f.width() < 2 || f.height() < 2) throw ShapeError("total_variation: field must be at least 2x2");
  const int w = f.width(), h = f.height(), ch = f.channels();
  double sx = 0.0, sy = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        const double v = f(x, y, c);
        if (x + 1 < w) sx += std::abs(static_cast<double>(f(x + 1, y, c)) - v);
        if (y + 1 < h) sy += std::abs(static_cast<double>(f(x, y + 1, c)) - v);
      }
    }
  }
  const double nx = static_cast<double>(w - 1) * h * ch;
  const double ny = static_cast<double>(w) * (h - 1) * ch;
  return sx / nx + sy / ny;
}

/// Total variation and its subgradient (sign of each difference, 0 at ties).
inline double total_variation_with_grad(const Image<double>& f, Image<double>& grad) {
  if (f.width() < 2 || f.height() < 2) throw ShapeError("total_variation: field must be at least 2x2");
  const int w = f.width(), h = f.height(), ch = f.channels();
  const double nx = static_cast<double>(w - 1) * h * ch;
  const double ny = static_cast<double>(w) * (h - 1) * ch;
  grad = Image<double>(h, w, ch);
  auto sgn = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
  double sx = 0.0, sy = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        if (x + 1 < w) {
          const double d = f(x + 1, y, c) - f(x, y, c);
          sx += std::abs(d);
          grad(x + 1, y, c) += sgn(d) / nx;
          grad(x, y, c) -= sgn(d) / nx;
        }
        if (y + 1 < h) {
          const double d = f(x, y + 1, c) - f(x, y, c);
          sy += std::abs(d);
          grad(x, y + 1, c) += sgn(d) / ny;
          grad(x, y, c) -= sgn(d) / ny;
        }
      }
    }
  }
  return sx / nx + sy / ny;
}

}  // namespace retinex
