#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "ftattack/parallel.hpp"
#include "ftattack/tensor.hpp"

namespace ftattack {

// ---------------------------------------------------------------------------
// Mean absolute error

inline void require_loss_pair(const Tensor& a, const Tensor& b, const char* who) {
  require_same_shape(a, b, who);
  if (a.size() == 0) throw ShapeError(std::string(who) + ": empty tensors");
}

/// Full-precision accumulator value; the public entry point rounds to real.
inline double mae_value(const Tensor& a, const Tensor& b) {
  require_loss_pair(a, b, "mae");
  double s = 0.0;
  for (int64_t i = 0; i < a.size(); ++i) s += std::abs(double(a[i]) - double(b[i]));
  return s / double(a.size());
}

inline real mae(const Tensor& a, const Tensor& b) { return static_cast<real>(mae_value(a, b)); }

/// Accumulates scale * d(mae)/d(b) into grad_b; returns the value.
inline real mae_with_grad(const Tensor& a, const Tensor& b, real scale, Tensor& grad_b) {
  require_loss_pair(a, b, "mae");
  require_same_shape(b, grad_b, "mae_with_grad");
  double s = 0.0;
  const real g = scale / static_cast<real>(a.size());
  for (int64_t i = 0; i < a.size(); ++i) {
    const real d = b[i] - a[i];
    s += std::abs(double(d));
    if (d > real(0))
      grad_b[i] += g;
    else if (d < real(0))
      grad_b[i] -= g;
  }
  return static_cast<real>(s / double(a.size()));
}

// ---------------------------------------------------------------------------
// SSIM (Gaussian 7x7 window, sigma 1.5, L = 1, valid window placement)

namespace detail {

inline constexpr int kSsimWindow = 7;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;  // (0.01 L)^2
inline constexpr double kSsimC2 = 0.03 * 0.03;  // (0.03 L)^2

inline const std::array<real, kSsimWindow>& ssim_window() {
  static const std::array<real, kSsimWindow> w = [] {
    std::array<double, kSsimWindow> g{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
      const double x = i - (kSsimWindow - 1) / 2.0;
      g[i] = std::exp(-(x * x) / (2.0 * kSsimSigma * kSsimSigma));
      sum += g[i];
    }
    std::array<real, kSsimWindow> out{};
    for (int i = 0; i < kSsimWindow; ++i) out[i] = static_cast<real>(g[i] / sum);
    return out;
  }();
  return w;
}

// Valid separable correlation with the 1-D window, rows then columns.
inline void smooth_rows(const real* in, int64_t h, int64_t w, real* out) {
  const auto& win = ssim_window();
  const int64_t wo = w - kSsimWindow + 1;
  for (int64_t y = 0; y < h; ++y) {
    const real* row = in + y * w;
    real* dst = out + y * wo;
    for (int64_t x = 0; x < wo; ++x) {
      real s = 0;
      for (int i = 0; i < kSsimWindow; ++i) s += win[i] * row[x + i];
      dst[x] = s;
    }
  }
}

inline void smooth_cols(const real* in, int64_t h, int64_t w, real* out) {
  const auto& win = ssim_window();
  const int64_t ho = h - kSsimWindow + 1;
  for (int64_t y = 0; y < ho; ++y) {
    real* dst = out + y * w;
    for (int64_t x = 0; x < w; ++x) {
      real s = 0;
      for (int i = 0; i < kSsimWindow; ++i) s += win[i] * in[(y + i) * w + x];
      dst[x] = s;
    }
  }
}

/// in (h x w) -> out (h-6 x w-6); scratch must hold h * (w-6).
inline void smooth_valid(const real* in, int64_t h, int64_t w, real* scratch, real* out) {
  smooth_rows(in, h, w, scratch);
  smooth_cols(scratch, h, w - kSsimWindow + 1, out);
}

/// Adjoint of smooth_valid: scatters a (h-6 x w-6) field back to (h x w).
/// Implemented as the valid correlation of the zero-padded field (the window
/// is symmetric).
inline void smooth_scatter(const real* in, int64_t ho, int64_t wo, std::vector<real>& pad_buf,
                           std::vector<real>& scratch, real* out) {
  const int k = kSsimWindow;
  const int64_t hp = ho + 2 * (k - 1), wp = wo + 2 * (k - 1);
  pad_buf.assign(static_cast<size_t>(hp * wp), real(0));
  for (int64_t y = 0; y < ho; ++y)
    std::copy(in + y * wo, in + (y + 1) * wo, pad_buf.data() + (y + k - 1) * wp + (k - 1));
  scratch.resize(static_cast<size_t>(hp * (wp - k + 1)));
  smooth_valid(pad_buf.data(), hp, wp, scratch.data(), out);
}

}  // namespace detail

namespace detail {

// Shared SSIM pass; when grad_b is non-null, accumulates scale * d(ssim)/d(b).
inline double ssim_impl(const Tensor& a, const Tensor& b, real scale, Tensor* grad_b) {
  require_loss_pair(a, b, "ssim");
  if (a.rank() != 4) throw ShapeError("ssim: expected (N,C,H,W)");
  const int64_t n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  const int k = kSsimWindow;
  if (h < k || w < k)
    throw SizeError("ssim: image " + a.shape_str() + " smaller than the window");
  const int64_t ho = h - k + 1, wo = w - k + 1;
  const int64_t hw = h * w, howo = ho * wo;
  const double total_windows = double(n) * double(c) * double(howo);
  const real c1 = static_cast<real>(kSsimC1), c2 = static_cast<real>(kSsimC2);

  std::vector<double> partial(static_cast<size_t>(n), 0.0);
  parallel_chunks(n, 1, [&](int64_t, int64_t lo, int64_t hi) {
    std::vector<real> sq(static_cast<size_t>(hw));
    std::vector<real> scratch(static_cast<size_t>(h * (w - k + 1)));
    std::vector<real> ma(howo), mb(howo), saa(howo), sbb(howo), sab(howo);
    std::vector<real> g_mb, g_sbb, g_sab, scat, pad_buf, scat_scratch;
    if (grad_b) {
      g_mb.resize(howo);
      g_sbb.resize(howo);
      g_sab.resize(howo);
      scat.resize(static_cast<size_t>(hw));
    }
    for (int64_t i = lo; i < hi; ++i) {
      double acc = 0.0;
      for (int64_t ch = 0; ch < c; ++ch) {
        const real* pa = a.data() + (i * c + ch) * hw;
        const real* pb = b.data() + (i * c + ch) * hw;
        smooth_valid(pa, h, w, scratch.data(), ma.data());
        smooth_valid(pb, h, w, scratch.data(), mb.data());
        for (int64_t j = 0; j < hw; ++j) sq[j] = pa[j] * pa[j];
        smooth_valid(sq.data(), h, w, scratch.data(), saa.data());
        for (int64_t j = 0; j < hw; ++j) sq[j] = pb[j] * pb[j];
        smooth_valid(sq.data(), h, w, scratch.data(), sbb.data());
        for (int64_t j = 0; j < hw; ++j) sq[j] = pa[j] * pb[j];
        smooth_valid(sq.data(), h, w, scratch.data(), sab.data());

        for (int64_t p = 0; p < howo; ++p) {
          const real va = ma[p], vb = mb[p];
          const real sig_ab = sab[p] - va * vb;
          const real sig_a = saa[p] - va * va;
          const real sig_b = sbb[p] - vb * vb;
          const real n1 = real(2) * va * vb + c1;
          const real d1 = va * va + vb * vb + c1;
          const real n2 = real(2) * sig_ab + c2;
          const real d2 = sig_a + sig_b + c2;
          const real f = n1 / d1;
          const real g = n2 / d2;
          acc += double(f) * double(g);
          if (grad_b) {
            g_mb[p] = g * real(2) * (va * d1 - vb * n1) / (d1 * d1) +
                      f * real(2) * (vb * n2 - va * d2) / (d2 * d2);
            g_sbb[p] = -f * n2 / (d2 * d2);
            g_sab[p] = f * real(2) / d2;
          }
        }
        if (grad_b) {
          const real norm = scale / static_cast<real>(total_windows);
          real* gb = grad_b->data() + (i * c + ch) * hw;
          smooth_scatter(g_mb.data(), ho, wo, pad_buf, scat_scratch, scat.data());
          for (int64_t j = 0; j < hw; ++j) gb[j] += norm * scat[j];
          smooth_scatter(g_sbb.data(), ho, wo, pad_buf, scat_scratch, scat.data());
          for (int64_t j = 0; j < hw; ++j) gb[j] += norm * real(2) * pb[j] * scat[j];
          smooth_scatter(g_sab.data(), ho, wo, pad_buf, scat_scratch, scat.data());
          for (int64_t j = 0; j < hw; ++j) gb[j] += norm * pa[j] * scat[j];
        }
      }
      partial[static_cast<size_t>(i)] = acc;
    }
  });
  double sum = 0.0;
  for (double p : partial) sum += p;
  return sum / total_windows;
}

}  // namespace detail

inline double ssim_value(const Tensor& a, const Tensor& b) {
  return detail::ssim_impl(a, b, real(0), nullptr);
}

/// Mean SSIM over all valid windows and channels, dynamic range L = 1.
inline real ssim(const Tensor& a, const Tensor& b) {
  return static_cast<real>(ssim_value(a, b));
}

inline real ssim_with_grad(const Tensor& a, const Tensor& b, real scale, Tensor& grad_b) {
  require_same_shape(b, grad_b, "ssim_with_grad");
  return static_cast<real>(detail::ssim_impl(a, b, scale, &grad_b));
}

/// Structural dissimilarity, (1 - SSIM) / 2 in [0, 1].
inline real dssim(const Tensor& a, const Tensor& b) {
  return (real(1) - ssim(a, b)) / real(2);
}

// ---------------------------------------------------------------------------
// Channel variability: mean over pixels of the population variance of the
// perturbation across channels. Gray-level shifts cost zero.

inline double varc_value(const Tensor& a, const Tensor& b) {
  require_loss_pair(a, b, "varc");
  if (a.rank() != 4 || a.dim(1) != 3) throw ShapeError("varc: expected (N,3,H,W)");
  const int64_t n = a.dim(0), hw = a.dim(2) * a.dim(3);
  double sum = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const real* pa = a.data() + i * 3 * hw;
    const real* pb = b.data() + i * 3 * hw;
    for (int64_t j = 0; j < hw; ++j) {
      const double d0 = double(pa[j]) - double(pb[j]);
      const double d1 = double(pa[hw + j]) - double(pb[hw + j]);
      const double d2 = double(pa[2 * hw + j]) - double(pb[2 * hw + j]);
      const double m = (d0 + d1 + d2) / 3.0;
      sum += ((d0 - m) * (d0 - m) + (d1 - m) * (d1 - m) + (d2 - m) * (d2 - m)) / 3.0;
    }
  }
  return sum / (double(n) * double(hw));
}

inline real varc(const Tensor& a, const Tensor& b) {
  return static_cast<real>(varc_value(a, b));
}

inline real varc_with_grad(const Tensor& a, const Tensor& b, real scale, Tensor& grad_b) {
  require_loss_pair(a, b, "varc");
  require_same_shape(b, grad_b, "varc_with_grad");
  if (a.rank() != 4 || a.dim(1) != 3) throw ShapeError("varc: expected (N,3,H,W)");
  const int64_t n = a.dim(0), hw = a.dim(2) * a.dim(3);
  const real norm = scale * real(2) / (real(3) * static_cast<real>(n) * static_cast<real>(hw));
  double sum = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const real* pa = a.data() + i * 3 * hw;
    const real* pb = b.data() + i * 3 * hw;
    real* gb = grad_b.data() + i * 3 * hw;
    for (int64_t j = 0; j < hw; ++j) {
      const real d0 = pa[j] - pb[j];
      const real d1 = pa[hw + j] - pb[hw + j];
      const real d2 = pa[2 * hw + j] - pb[2 * hw + j];
      const real m = (d0 + d1 + d2) / real(3);
      sum += (double(d0 - m) * (d0 - m) + double(d1 - m) * (d1 - m) +
              double(d2 - m) * (d2 - m)) /
             3.0;
      gb[j] -= norm * (d0 - m);
      gb[hw + j] -= norm * (d1 - m);
      gb[2 * hw + j] -= norm * (d2 - m);
    }
  }
  return static_cast<real>(sum / (double(n) * double(hw)));
}

// ---------------------------------------------------------------------------
// Feature distance: mean absolute difference over feature-map elements.

inline double feature_distance_value(const Tensor& fa, const Tensor& fb) {
  require_loss_pair(fa, fb, "feature_distance");
  double s = 0.0;
  for (int64_t i = 0; i < fa.size(); ++i) s += std::abs(double(fa[i]) - double(fb[i]));
  return s / double(fa.size());
}

inline real feature_distance(const Tensor& fa, const Tensor& fb) {
  return static_cast<real>(feature_distance_value(fa, fb));
}

inline real feature_distance_with_grad(const Tensor& fa, const Tensor& fb, real scale,
                                       Tensor& grad_fb) {
  require_loss_pair(fa, fb, "feature_distance");
  require_same_shape(fb, grad_fb, "feature_distance_with_grad");
  double s = 0.0;
  const real g = scale / static_cast<real>(fa.size());
  for (int64_t i = 0; i < fa.size(); ++i) {
    const real d = fb[i] - fa[i];
    s += std::abs(double(d));
    if (d > real(0))
      grad_fb[i] += g;
    else if (d < real(0))
      grad_fb[i] -= g;
  }
  return static_cast<real>(s / double(fa.size()));
}

// ---------------------------------------------------------------------------
// Compound training loss

struct LossWeights {
  real alpha = 1;  // MAE
  real beta = 1;   // structural term
  real gamma = 1;  // channel variability
  real delta = 1;  // feature distance
  // -1: maximize the feature distance (default); +1: the additive variant
  // kept for ablation.
  real feature_sign = -1;
  // When true the structural term enters as raw SSIM instead of DSSIM
  // (fidelity-experiment mode).
  bool raw_ssim = false;

  void validate() const {
    if (!(alpha >= 0) || !(beta >= 0) || !(gamma >= 0) || !(delta >= 0) ||
        !std::isfinite(alpha) || !std::isfinite(beta) || !std::isfinite(gamma) ||
        !std::isfinite(delta))
      throw ShapeError("LossWeights: weights must be finite and non-negative");
    if (feature_sign != real(-1) && feature_sign != real(1))
      throw ShapeError("LossWeights: feature_sign must be -1 or +1");
  }
};

struct LossBreakdown {
  real mae = 0;
  real dssim = 0;
  real varc = 0;
  real feat_dist = 0;
  real total = 0;
};

struct CompoundResult {
  LossBreakdown parts;
  Tensor grad_adversarial;   // d(total)/d(adversarial image), direct terms
  Tensor grad_features_adv;  // d(total)/d(simulated features of the adversarial image)
};

/// total = alpha*mae + beta*dssim + gamma*varc + feature_sign*delta*feat_dist.
/// The gradient through the simulation network is returned separately so the
/// caller can push it through the fixed kernels into the generator.
inline CompoundResult compound_loss(const Tensor& original, const Tensor& adversarial,
                                    const Tensor& feat_orig, const Tensor& feat_adv,
                                    const LossWeights& w) {
  w.validate();
  CompoundResult r;
  r.grad_adversarial = Tensor(adversarial.shape());
  r.grad_features_adv = Tensor(feat_adv.shape());

  r.parts.mae = w.alpha > 0
                    ? mae_with_grad(original, adversarial, w.alpha, r.grad_adversarial)
                    : mae(original, adversarial);
  real ssim_value;
  if (w.beta > 0) {
    // d(dssim)/d(b) = -1/2 d(ssim)/d(b)
    const real ssim_scale = w.raw_ssim ? w.beta : -w.beta / real(2);
    ssim_value = ssim_with_grad(original, adversarial, ssim_scale, r.grad_adversarial);
  } else {
    ssim_value = ssim(original, adversarial);
  }
  r.parts.dssim = (real(1) - ssim_value) / real(2);
  r.parts.varc = w.gamma > 0
                     ? varc_with_grad(original, adversarial, w.gamma, r.grad_adversarial)
                     : varc(original, adversarial);
  const real feat_scale = w.feature_sign * w.delta;
  r.parts.feat_dist = w.delta > 0 ? feature_distance_with_grad(feat_orig, feat_adv, feat_scale,
                                                               r.grad_features_adv)
                                  : feature_distance(feat_orig, feat_adv);
  const real structural = w.raw_ssim ? ssim_value : r.parts.dssim;
  r.parts.total = w.alpha * r.parts.mae + w.beta * structural + w.gamma * r.parts.varc +
                  feat_scale * r.parts.feat_dist;
  return r;
}

}  // namespace ftattack
