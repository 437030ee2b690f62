#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "retinex/color.hpp"
#include "retinex/dual.hpp"
#include "retinex/image.hpp"
#include "retinex/metrics.hpp"
#include "retinex/model.hpp"

namespace retinex {

/// Weights of the seven objective terms; defaults are the published values.
struct LossWeights {
  double l2 = 3.0;           // λ1 reconstruction L2
  double ssim = 1.0;         // λ2 (1 - SSIM)^2
  double delta_e = 2.0;      // λ3 (mean ΔE)^2
  double pairwise_r = 3.0;   // λ4 reflectance agreement across views
  double mean_anchor = 1.0;  // λ5 |0.5 - mean(R)|
  double tv = 10.0;          // λ6 shading total variation
  double color = 20.0;       // λ7 illumination colour supervision

  void check() const {
    for (double w : {l2, ssim, delta_e, pairwise_r, mean_anchor, tv, color}) {
      if (!std::isfinite(w) || w < 0.0) throw ValidationError("loss weights must be finite and >= 0");
    }
  }
  static LossWeights zero() { return {0, 0, 0, 0, 0, 0, 0}; }
};

inline void to_json(nlohmann::json& j, const LossWeights& w) {
  j = nlohmann::json{{"l2", w.l2},           {"ssim", w.ssim},
                     {"delta_e", w.delta_e}, {"pairwise_r", w.pairwise_r},
                     {"mean_anchor", w.mean_anchor}, {"tv", w.tv},
                     {"color", w.color}};
}
inline void from_json(const nlohmann::json& j, LossWeights& w) {
  w.l2 = j.value("l2", w.l2);
  w.ssim = j.value("ssim", w.ssim);
  w.delta_e = j.value("delta_e", w.delta_e);
  w.pairwise_r = j.value("pairwise_r", w.pairwise_r);
  w.mean_anchor = j.value("mean_anchor", w.mean_anchor);
  w.tv = j.value("tv", w.tv);
  w.color = j.value("color", w.color);
}

/// Weighted contributions of every term. recon = l2 + ssim + delta_e,
/// reflect = pairwise_r + mean_anchor, other = tv + color.
struct LossBreakdown {
  double recon = 0.0;
  double reflect = 0.0;
  double other = 0.0;
  double total = 0.0;
  double l2 = 0.0;
  double ssim = 0.0;
  double delta_e = 0.0;
  double pairwise_r = 0.0;
  double mean_anchor = 0.0;
  double tv = 0.0;
  double color = 0.0;

  void finalize() {
    recon = l2 + ssim + delta_e;
    reflect = pairwise_r + mean_anchor;
    other = tv + color;
    total = recon + reflect + other;
  }

  LossBreakdown& operator+=(const LossBreakdown& o) {
    l2 += o.l2;
    ssim += o.ssim;
    delta_e += o.delta_e;
    pairwise_r += o.pairwise_r;
    mean_anchor += o.mean_anchor;
    tv += o.tv;
    color += o.color;
    finalize();
    return *this;
  }
  LossBreakdown scaled_by(double s) const {
    LossBreakdown b = *this;
    for (double* v : {&b.l2, &b.ssim, &b.delta_e, &b.pairwise_r, &b.mean_anchor, &b.tv, &b.color}) *v *= s;
    b.finalize();
    return b;
  }

  /// Name of the first non-finite term, or empty when all are finite.
  std::string non_finite_term() const {
    const std::pair<const char*, double> terms[] = {{"l2", l2},       {"ssim", ssim}, {"delta_e", delta_e},
                                                    {"pairwise_r", pairwise_r},       {"mean_anchor", mean_anchor},
                                                    {"tv", tv},       {"color", color}};
    for (const auto& [name, v] : terms) {
      if (!std::isfinite(v)) return name;
    }
    return {};
  }
};

inline void to_json(nlohmann::json& j, const LossBreakdown& b) {
  j = nlohmann::json{{"total", b.total},     {"recon", b.recon}, {"reflect", b.reflect},
                     {"other", b.other},     {"l2", b.l2},       {"ssim", b.ssim},
                     {"delta_e", b.delta_e}, {"pairwise_r", b.pairwise_r}, {"mean_anchor", b.mean_anchor},
                     {"tv", b.tv},           {"color", b.color}};
}

template <class T>
using Triple = std::array<T, 3>;

/// Network outputs for one view, in double precision.
struct ViewDecomposition {
  Image<double> R;
  Image<double> GS;
  Rgb c{1.0, 1.0, 1.0};
};

inline ViewDecomposition to_view(const Decomposition& d) {
  return {d.R.cast<double>(), d.GS.cast<double>(), d.c.c};
}

struct LossGradients {
  Triple<Image<double>> R;
  Triple<Image<double>> GS;
  Triple<Rgb> c{};
};

namespace detail {

inline void check_views(const Triple<Image<double>>& images, const char* what) {
  for (const auto& img : images) {
    require_same_shape(img, images[0], what);
    if (img.channels() != 3) throw ShapeError(std::string(what) + ": expected 3-channel maps");
  }
}

inline std::vector<LabColor<double>> lab_of(const Image<double>& img) { return to_lab(img); }

/// Adds d(mean ΔE)/dY into grad (scaled by `scale`) and returns mean ΔE.
inline double mean_delta_e_grad(const std::vector<LabColor<double>>& ref_lab, const Image<double>& y,
                                Image<double>* grad, double scale) {
  const std::size_t n = y.pixel_count();
  const auto d = y.data();
  double acc = 0.0;
  if (grad == nullptr) {
    for (std::size_t p = 0; p < n; ++p) {
      acc += ciede2000(ref_lab[p], linear_to_lab<double>(d[3 * p], d[3 * p + 1], d[3 * p + 2]));
    }
    return acc / static_cast<double>(n);
  }
  using D3 = Dual<3>;
  std::vector<Rgb> pixel_grad(n);
  for (std::size_t p = 0; p < n; ++p) {
    const LabColor<D3> ref{D3(ref_lab[p].L), D3(ref_lab[p].a), D3(ref_lab[p].b)};
    const auto lab = linear_to_lab<D3>(D3::variable(d[3 * p], 0), D3::variable(d[3 * p + 1], 1),
                                       D3::variable(d[3 * p + 2], 2));
    const D3 de = ciede2000(ref, lab);
    acc += de.v;
    pixel_grad[p] = de.v > 0.0 ? de.d : Rgb{0.0, 0.0, 0.0};
  }
  const double mean = acc / static_cast<double>(n);
  // d/dY of (mean)^2 scaled: scale * 2 * mean / n * dΔE/dY
  const double k = scale * 2.0 * mean / static_cast<double>(n);
  auto g = grad->data();
  for (std::size_t p = 0; p < n; ++p) {
    for (int c = 0; c < 3; ++c) g[3 * p + c] += k * pixel_grad[p][c];
  }
  return mean;
}

inline LossBreakdown recon_terms(const Triple<Image<double>>& inputs, const Triple<Image<double>>& rs,
                                 const Triple<Image<double>>& ss, const LossWeights& w,
                                 Triple<Image<double>>* grad_r, Triple<Image<double>>* grad_s) {
  check_views(inputs, "recon_loss");
  check_views(rs, "recon_loss");
  check_views(ss, "recon_loss");
  require_same_shape(inputs[0], rs[0], "recon_loss");
  const bool want_grad = grad_r != nullptr;
  LossBreakdown b;
  std::array<std::vector<LabColor<double>>, 3> labs;
  if (w.delta_e > 0.0) {
    for (int i = 0; i < 3; ++i) labs[i] = lab_of(inputs[i]);
  }
  const double n = static_cast<double>(inputs[0].size());
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const Image<double> y = reconstruct(rs[j], ss[i]);
      Image<double> gy;
      if (want_grad) gy = Image<double>(y.height(), y.width(), 3);
      if (w.l2 > 0.0) {
        const auto yi = y.data();
        const auto xi = inputs[i].data();
        double acc = 0.0;
        for (std::size_t k = 0; k < yi.size(); ++k) {
          const double r = yi[k] - xi[k];
          acc += r * r;
          if (want_grad) gy.data()[k] += w.l2 * 2.0 * r / n;
        }
        b.l2 += w.l2 * acc / n;
      }
      if (w.ssim > 0.0) {
        Image<double> gs;
        const double s = want_grad ? ssim_with_grad(inputs[i], y, gs) : ssim(inputs[i], y);
        const double one_minus = 1.0 - s;
        b.ssim += w.ssim * one_minus * one_minus;
        if (want_grad) {
          const double k = -2.0 * w.ssim * one_minus;
          for (std::size_t q = 0; q < gy.size(); ++q) gy.data()[q] += k * gs.data()[q];
        }
      }
      if (w.delta_e > 0.0) {
        const double m = mean_delta_e_grad(labs[i], y, want_grad ? &gy : nullptr, w.delta_e);
        b.delta_e += w.delta_e * m * m;
      }
      if (want_grad) {
        auto gr = (*grad_r)[j].data();
        auto gsd = (*grad_s)[i].data();
        const auto rj = rs[j].data();
        const auto si = ss[i].data();
        const auto g = gy.data();
        for (std::size_t k = 0; k < g.size(); ++k) {
          gr[k] += g[k] * si[k];
          gsd[k] += g[k] * rj[k];
        }
      }
    }
  }
  return b;
}

inline LossBreakdown reflect_terms(const Triple<Image<double>>& rs, const LossWeights& w,
                                   Triple<Image<double>>* grad_r) {
  check_views(rs, "reflect_loss");
  LossBreakdown b;
  const double n = static_cast<double>(rs[0].size());
  std::array<double, 3> means{};
  for (int i = 0; i < 3; ++i) {
    double s = 0.0;
    for (double v : rs[i].data()) s += v;
    means[i] = s / n;
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      if (w.pairwise_r > 0.0) {
        const auto a = rs[i].data(), c = rs[j].data();
        double acc = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
          const double d = a[k] - c[k];
          acc += d * d;
          if (grad_r != nullptr) {
            (*grad_r)[i].data()[k] += w.pairwise_r * 2.0 * d / n;
            (*grad_r)[j].data()[k] -= w.pairwise_r * 2.0 * d / n;
          }
        }
        b.pairwise_r += w.pairwise_r * acc / n;
      }
      if (w.mean_anchor > 0.0) {
        // the anchor sits inside the double sum, so each view is counted three times
        const double dev = 0.5 - means[i];
        b.mean_anchor += w.mean_anchor * std::abs(dev);
        if (grad_r != nullptr && dev != 0.0) {
          const double g = w.mean_anchor * (dev > 0.0 ? -1.0 : 1.0) / n;
          for (auto& v : (*grad_r)[i].data()) v += g;
        }
      }
    }
  }
  return b;
}

inline LossBreakdown other_terms(const Triple<Image<double>>& ss, const Triple<Rgb>& c_hat, const Triple<Rgb>& c_true,
                                 const LossWeights& w, Triple<Image<double>>* grad_s, Triple<Rgb>* grad_c) {
  LossBreakdown b;
  for (int i = 0; i < 3; ++i) {
    if (w.tv > 0.0) {
      if (grad_s != nullptr) {
        Image<double> g;
        b.tv += w.tv * total_variation_with_grad(ss[i], g);
        auto dst = (*grad_s)[i].data();
        const auto src = g.data();
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += w.tv * src[k];
      } else {
        b.tv += w.tv * total_variation(ss[i]);
      }
    }
    if (w.color > 0.0) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) {
        const double d = c_hat[i][k] - c_true[i][k];
        acc += d * d;
        if (grad_c != nullptr) (*grad_c)[i][k] += w.color * 2.0 * d;
      }
      b.color += w.color * acc;
    }
  }
  return b;
}

inline Triple<Image<double>> zeros_like(const Triple<Image<double>>& x) {
  Triple<Image<double>> out;
  for (int i = 0; i < 3; ++i) out[i] = Image<double>(x[i].height(), x[i].width(), x[i].channels());
  return out;
}

}  // namespace detail

/// Σ_i Σ_j [λ1 mse(I_i, R_j S_i) + λ2 (1 - SSIM)^2 + λ3 (mean ΔE)^2] over all nine pairings.
inline double recon_loss(const Triple<Image<double>>& inputs, const Triple<Image<double>>& rs,
                         const Triple<Image<double>>& ss, const LossWeights& w) {
  w.check();
  auto b = detail::recon_terms(inputs, rs, ss, w, nullptr, nullptr);
  b.finalize();
  return b.recon;
}

/// Σ_i Σ_j [λ4 mse(R_i, R_j) + λ5 |0.5 - mean(R_i)|].
inline double reflect_loss(const Triple<Image<double>>& rs, const LossWeights& w) {
  w.check();
  auto b = detail::reflect_terms(rs, w, nullptr);
  b.finalize();
  return b.reflect;
}

/// Σ_i [λ6 tv(S_i) + λ7 ||c_i - ĉ_i||^2].
inline double other_loss(const Triple<Image<double>>& ss, const Triple<Rgb>& c_hat, const Triple<Rgb>& c_true,
                         const LossWeights& w) {
  w.check();
  auto b = detail::other_terms(ss, c_hat, c_true, w, nullptr, nullptr);
  b.finalize();
  return b.other;
}

/// Which component groups contribute gradients in total_loss_with_grad.
struct LossTermMask {
  bool recon = true;
  bool reflect = true;
  bool other = true;
};

/// Full objective for one triplet. When `grads` is non-null it receives
/// gradients with respect to every view's R, GS and ĉ (shading composed inside).
inline LossBreakdown total_loss(const Triple<Image<double>>& inputs, const Triple<ViewDecomposition>& views,
                                const Triple<Rgb>& c_true, const LossWeights& w, LossGradients* grads = nullptr,
                                LossTermMask mask = {}) {
  w.check();
  Triple<Image<double>> rs, ss;
  Triple<Rgb> c_hat;
  for (int i = 0; i < 3; ++i) {
    if (views[i].GS.channels() != 1 || !views[i].GS.same_extent(views[i].R)) {
      throw ShapeError("total_loss: gray shading must be single-channel and match R");
    }
    rs[i] = views[i].R;
    ss[i] = compose_shading(views[i].GS, IlluminationColor{views[i].c});
    c_hat[i] = views[i].c;
  }
  Triple<Image<double>> grad_r, grad_s;
  Triple<Rgb> grad_c{};
  const bool want = grads != nullptr;
  if (want) {
    grad_r = detail::zeros_like(rs);
    grad_s = detail::zeros_like(ss);
  }
  LossBreakdown b;
  if (mask.recon) b += detail::recon_terms(inputs, rs, ss, w, want ? &grad_r : nullptr, want ? &grad_s : nullptr);
  if (mask.reflect) b += detail::reflect_terms(rs, w, want ? &grad_r : nullptr);
  if (mask.other) b += detail::other_terms(ss, c_hat, c_true, w, want ? &grad_s : nullptr, want ? &grad_c : nullptr);
  b.finalize();

  if (want) {
    for (int i = 0; i < 3; ++i) {
      const auto& gsv = views[i].GS;
      grads->R[i] = std::move(grad_r[i]);
      grads->GS[i] = Image<double>(gsv.height(), gsv.width(), 1);
      grads->c[i] = grad_c[i];
      const auto ds = grad_s[i].data();
      const auto g = gsv.data();
      auto dgs = grads->GS[i].data();
      for (std::size_t p = 0; p < g.size(); ++p) {
        double acc = 0.0;
        for (int k = 0; k < 3; ++k) {
          acc += c_hat[i][k] * ds[3 * p + k];
          grads->c[i][k] += g[p] * ds[3 * p + k];
        }
        dgs[p] = acc;
      }
    }
  }
  return b;
}

}  // namespace retinex
