#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "ftattack/data.hpp"
#include "ftattack/nn.hpp"
#include "ftattack/optim.hpp"
#include "ftattack/parallel.hpp"
#include "ftattack/rng.hpp"

namespace ftattack {

// ---------------------------------------------------------------------------
// Augmentations

struct AugmentationConfig {
  bool flips = false;
  bool perspective = false;
  bool resize_crop = false;
  bool rotate = false;
  bool blur = false;
  bool contrast = false;
  bool saturation = false;
  bool hue = false;
  bool intensity = false;

  double prob = 0.5;  // per enabled op
  double max_rotate_deg = 15.0;
  double scale_lo = 0.85, scale_hi = 1.15;
  double max_corner_px = 3.0;
  double blur_sigma_lo = 0.3, blur_sigma_hi = 1.0;
  double contrast_lo = 0.7, contrast_hi = 1.3;
  double saturation_lo = 0.7, saturation_hi = 1.3;
  double max_hue_deg = 18.0;
  double max_intensity_shift = 0.1;

  static AugmentationConfig none() { return {}; }

  /// Flips, perspective distortion, resize, rotate, and blur.
  static AugmentationConfig base() {
    AugmentationConfig c;
    c.flips = c.perspective = c.resize_crop = c.rotate = c.blur = true;
    return c;
  }

  /// Base set plus contrast, saturation, hue, and intensity.
  static AugmentationConfig enriched() {
    AugmentationConfig c = base();
    c.contrast = c.saturation = c.hue = c.intensity = true;
    return c;
  }
};

namespace detail {

inline real sample_bilinear(const real* ch, int64_t h, int64_t w, double y, double x) {
  y = std::min(double(h - 1), std::max(0.0, y));
  x = std::min(double(w - 1), std::max(0.0, x));
  const int64_t y0 = static_cast<int64_t>(y), x0 = static_cast<int64_t>(x);
  const int64_t y1 = std::min(h - 1, y0 + 1), x1 = std::min(w - 1, x0 + 1);
  const double fy = y - y0, fx = x - x0;
  return static_cast<real>((1 - fy) * ((1 - fx) * ch[y0 * w + x0] + fx * ch[y0 * w + x1]) +
                           fy * ((1 - fx) * ch[y1 * w + x0] + fx * ch[y1 * w + x1]));
}

/// Resamples all channels through an output->source coordinate map.
template <class MapFn>
inline void warp_image(real* img, int64_t channels, int64_t h, int64_t w, MapFn&& map,
                       std::vector<real>& scratch) {
  scratch.assign(img, img + channels * h * w);
  for (int64_t y = 0; y < h; ++y)
    for (int64_t x = 0; x < w; ++x) {
      double sy, sx;
      map(double(y), double(x), sy, sx);
      for (int64_t c = 0; c < channels; ++c)
        img[c * h * w + y * w + x] = sample_bilinear(scratch.data() + c * h * w, h, w, sy, sx);
    }
}

/// Gaussian elimination with partial pivoting for the 8x8 homography system.
inline void solve8(double a[8][9]) {
  for (int col = 0; col < 8; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 8; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    for (int j = 0; j < 9; ++j) std::swap(a[col][j], a[pivot][j]);
    const double diag = a[col][col];
    for (int r = 0; r < 8; ++r) {
      if (r == col || a[r][col] == 0.0) continue;
      const double f = a[r][col] / diag;
      for (int j = col; j < 9; ++j) a[r][j] -= f * a[col][j];
    }
  }
  for (int r = 0; r < 8; ++r) a[r][8] /= a[r][r];
}

inline void clamp01(real* img, int64_t n) {
  for (int64_t i = 0; i < n; ++i) img[i] = std::min(real(1), std::max(real(0), img[i]));
}

inline void augment_one(real* img, int64_t h, int64_t w, const AugmentationConfig& cfg, Rng& rng,
                        std::vector<real>& scratch) {
  const int64_t hw = h * w;
  if (cfg.flips && rng.bernoulli(cfg.prob)) {
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < h; ++y) {
        real* row = img + c * hw + y * w;
        for (int64_t x = 0; x < w / 2; ++x) std::swap(row[x], row[w - 1 - x]);
      }
  }
  if (cfg.rotate && rng.bernoulli(cfg.prob)) {
    const double ang = rng.uniform(-cfg.max_rotate_deg, cfg.max_rotate_deg) *
                       3.14159265358979323846 / 180.0;
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    const double c = std::cos(ang), s = std::sin(ang);
    warp_image(img, 3, h, w,
               [&](double y, double x, double& sy, double& sx) {
                 const double dy = y - cy, dx = x - cx;
                 sy = cy + c * dy - s * dx;
                 sx = cx + s * dy + c * dx;
               },
               scratch);
  }
  if (cfg.resize_crop && rng.bernoulli(cfg.prob)) {
    const double scale = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
    warp_image(img, 3, h, w,
               [&](double y, double x, double& sy, double& sx) {
                 sy = cy + (y - cy) / scale;
                 sx = cx + (x - cx) / scale;
               },
               scratch);
  }
  if (cfg.perspective && rng.bernoulli(cfg.prob)) {
    // Output corners map to jittered source corners.
    const double dst[4][2] = {{0, 0}, {double(w - 1), 0}, {0, double(h - 1)},
                              {double(w - 1), double(h - 1)}};
    double src[4][2];
    for (int i = 0; i < 4; ++i) {
      src[i][0] = dst[i][0] + rng.uniform(-cfg.max_corner_px, cfg.max_corner_px);
      src[i][1] = dst[i][1] + rng.uniform(-cfg.max_corner_px, cfg.max_corner_px);
    }
    double sys[8][9] = {};
    for (int i = 0; i < 4; ++i) {
      const double X = dst[i][0], Y = dst[i][1], x = src[i][0], y = src[i][1];
      double* r0 = sys[2 * i];
      double* r1 = sys[2 * i + 1];
      r0[0] = X; r0[1] = Y; r0[2] = 1; r0[6] = -x * X; r0[7] = -x * Y; r0[8] = x;
      r1[3] = X; r1[4] = Y; r1[5] = 1; r1[6] = -y * X; r1[7] = -y * Y; r1[8] = y;
    }
    solve8(sys);
    const double a = sys[0][8], b = sys[1][8], c = sys[2][8], d = sys[3][8], e = sys[4][8],
                 f = sys[5][8], g = sys[6][8], hh = sys[7][8];
    warp_image(img, 3, h, w,
               [&](double y, double x, double& sy, double& sx) {
                 const double den = g * x + hh * y + 1.0;
                 sx = (a * x + b * y + c) / den;
                 sy = (d * x + e * y + f) / den;
               },
               scratch);
  }
  if (cfg.blur && rng.bernoulli(cfg.prob)) {
    const double sigma = rng.uniform(cfg.blur_sigma_lo, cfg.blur_sigma_hi);
    real k[5];
    double sum = 0.0;
    for (int i = -2; i <= 2; ++i) sum += std::exp(-i * i / (2.0 * sigma * sigma));
    for (int i = -2; i <= 2; ++i)
      k[i + 2] = static_cast<real>(std::exp(-i * i / (2.0 * sigma * sigma)) / sum);
    scratch.assign(img, img + 3 * hw);
    for (int64_t c = 0; c < 3; ++c) {  // rows
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          real s = 0;
          for (int i = -2; i <= 2; ++i) {
            const int64_t xx = std::min(w - 1, std::max<int64_t>(0, x + i));
            s += k[i + 2] * scratch[c * hw + y * w + xx];
          }
          img[c * hw + y * w + x] = s;
        }
    }
    scratch.assign(img, img + 3 * hw);
    for (int64_t c = 0; c < 3; ++c) {  // columns
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
          real s = 0;
          for (int i = -2; i <= 2; ++i) {
            const int64_t yy = std::min(h - 1, std::max<int64_t>(0, y + i));
            s += k[i + 2] * scratch[c * hw + yy * w + x];
          }
          img[c * hw + y * w + x] = s;
        }
    }
  }
  if (cfg.contrast && rng.bernoulli(cfg.prob)) {
    const real factor = static_cast<real>(rng.uniform(cfg.contrast_lo, cfg.contrast_hi));
    double mean = 0.0;
    for (int64_t i = 0; i < 3 * hw; ++i) mean += img[i];
    const real mu = static_cast<real>(mean / double(3 * hw));
    for (int64_t i = 0; i < 3 * hw; ++i) img[i] = mu + (img[i] - mu) * factor;
    clamp01(img, 3 * hw);
  }
  if (cfg.saturation && rng.bernoulli(cfg.prob)) {
    const real factor = static_cast<real>(rng.uniform(cfg.saturation_lo, cfg.saturation_hi));
    for (int64_t j = 0; j < hw; ++j) {
      const real g = (img[j] + img[hw + j] + img[2 * hw + j]) / real(3);
      img[j] = g + (img[j] - g) * factor;
      img[hw + j] = g + (img[hw + j] - g) * factor;
      img[2 * hw + j] = g + (img[2 * hw + j] - g) * factor;
    }
    clamp01(img, 3 * hw);
  }
  if (cfg.hue && rng.bernoulli(cfg.prob)) {
    // Rotation about the gray axis (1,1,1)/sqrt(3).
    const double ang = rng.uniform(-cfg.max_hue_deg, cfg.max_hue_deg) *
                       3.14159265358979323846 / 180.0;
    const double c = std::cos(ang), s = std::sin(ang);
    const double oc = (1.0 - c) / 3.0, ss = s / std::sqrt(3.0);
    const double m00 = c + oc, m01 = oc - ss, m02 = oc + ss;
    for (int64_t j = 0; j < hw; ++j) {
      const double r = img[j], g = img[hw + j], b = img[2 * hw + j];
      img[j] = static_cast<real>(m00 * r + m01 * g + m02 * b);
      img[hw + j] = static_cast<real>(m02 * r + m00 * g + m01 * b);
      img[2 * hw + j] = static_cast<real>(m01 * r + m02 * g + m00 * b);
    }
    clamp01(img, 3 * hw);
  }
  if (cfg.intensity && rng.bernoulli(cfg.prob)) {
    const real shift =
        static_cast<real>(rng.uniform(-cfg.max_intensity_shift, cfg.max_intensity_shift));
    for (int64_t i = 0; i < 3 * hw; ++i) img[i] += shift;
    clamp01(img, 3 * hw);
  }
  clamp01(img, 3 * hw);
}

}  // namespace detail

/// Randomized composition of the enabled ops; per-sample substreams are keyed
/// by (seed, sample index), so results are batch-partition independent.
inline Tensor augment(const Tensor& images, const AugmentationConfig& cfg, uint64_t seed) {
  if (images.rank() != 4 || images.dim(1) != 3) throw ShapeError("augment: need (N,3,H,W)");
  Tensor out = images;
  const int64_t n = images.dim(0), h = images.dim(2), w = images.dim(3);
  parallel_chunks(n, 8, [&](int64_t, int64_t lo, int64_t hi) {
    std::vector<real> scratch;
    for (int64_t i = lo; i < hi; ++i) {
      Rng rng = Rng::keyed(seed, 0xA06ULL, static_cast<uint64_t>(i));
      detail::augment_one(out.data() + i * 3 * h * w, h, w, cfg, rng, scratch);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Max pooling (2x2, stride 2) and the small classifier

inline Tensor maxpool2_forward(const Tensor& in, std::vector<int64_t>* argmax) {
  const int64_t n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  if (h % 2 || w % 2) throw ShapeError("maxpool2: spatial dims must be even");
  Tensor out({n, c, h / 2, w / 2});
  if (argmax) argmax->assign(static_cast<size_t>(out.size()), 0);
  const int64_t ho = h / 2, wo = w / 2;
  parallel_for(n * c, [&](int64_t plane) {
    const real* src = in.data() + plane * h * w;
    real* dst = out.data() + plane * ho * wo;
    for (int64_t y = 0; y < ho; ++y)
      for (int64_t x = 0; x < wo; ++x) {
        int64_t best = (2 * y) * w + 2 * x;
        real v = src[best];
        const int64_t cand[3] = {(2 * y) * w + 2 * x + 1, (2 * y + 1) * w + 2 * x,
                                 (2 * y + 1) * w + 2 * x + 1};
        for (int64_t idx : cand)
          if (src[idx] > v) {
            v = src[idx];
            best = idx;
          }
        dst[y * wo + x] = v;
        if (argmax) (*argmax)[static_cast<size_t>(plane * ho * wo + y * wo + x)] = best;
      }
  });
  return out;
}

inline Tensor maxpool2_backward(const Tensor& grad_out, const std::vector<int64_t>& argmax,
                                const std::vector<int64_t>& in_shape) {
  Tensor grad(in_shape);
  const int64_t planes = grad_out.dim(0) * grad_out.dim(1);
  const int64_t howo = grad_out.dim(2) * grad_out.dim(3);
  const int64_t hw = in_shape[2] * in_shape[3];
  parallel_for(planes, [&](int64_t plane) {
    const real* g = grad_out.data() + plane * howo;
    real* dst = grad.data() + plane * hw;
    for (int64_t j = 0; j < howo; ++j)
      dst[argmax[static_cast<size_t>(plane * howo + j)]] += g[j];
  });
  return grad;
}

inline constexpr int kVictimBlocks = 3;

/// conv3x3 -> batchnorm -> ReLU -> maxpool2 per block, then global average
/// pooling and a linear map to 2 logits.
struct VictimParams {
  std::array<int, kVictimBlocks> widths = {32, 64, 128};
  std::array<Tensor, kVictimBlocks> conv_w, conv_b;
  std::array<Tensor, kVictimBlocks> bn_gamma, bn_beta;
  std::array<BatchNormState, kVictimBlocks> bn_state;
  Tensor fc_w;  // (2, widths.back())
  Tensor fc_b;  // (2)

  int64_t block_in(int b) const { return b == 0 ? 3 : widths[static_cast<size_t>(b - 1)]; }

  ConvSpec conv_spec(int b) const {
    ConvSpec s;
    s.in_channels = block_in(b);
    s.out_channels = widths[static_cast<size_t>(b)];
    s.kernel_size = 3;
    s.padding = Padding::same_zero;
    return s;
  }
};

inline VictimParams init_victim(std::array<int, kVictimBlocks> widths, uint64_t seed) {
  VictimParams p;
  p.widths = widths;
  for (int b = 0; b < kVictimBlocks; ++b) {
    const int64_t cin = p.block_in(b), cout = widths[static_cast<size_t>(b)];
    p.conv_w[b] = Tensor({cout, cin, 3, 3});
    p.conv_b[b] = Tensor({cout});
    const double limit = std::sqrt(6.0 / (double(cin) * 9.0));
    Rng rng = Rng::keyed(seed, 0x71C00ULL + uint64_t(b));
    for (int64_t i = 0; i < p.conv_w[b].size(); ++i)
      p.conv_w[b][i] = static_cast<real>(rng.uniform(-limit, limit));
    p.bn_gamma[b] = Tensor::full({cout}, real(1));
    p.bn_beta[b] = Tensor({cout});
    p.bn_state[b] = BatchNormState::init(cout);
  }
  const int64_t cf = widths.back();
  p.fc_w = Tensor({2, cf});
  p.fc_b = Tensor({2});
  const double limit = std::sqrt(6.0 / double(cf));
  Rng rng = Rng::keyed(seed, 0x71CFCULL);
  for (int64_t i = 0; i < p.fc_w.size(); ++i)
    p.fc_w[i] = static_cast<real>(rng.uniform(-limit, limit));
  return p;
}

struct VictimCache {
  std::array<Tensor, kVictimBlocks> conv_in;
  std::array<BatchNormCache, kVictimBlocks> bn;
  std::array<Tensor, kVictimBlocks> relu_out;
  std::array<std::vector<int64_t>, kVictimBlocks> pool_argmax;
  std::array<std::vector<int64_t>, kVictimBlocks> pool_in_shape;
  Tensor gap_in;  // (N, C, h, w) fed into global average pooling
  Tensor fc_in;   // (N, C)
};

inline Tensor victim_logits(VictimParams& params, const Tensor& images, Mode mode,
                            VictimCache* cache = nullptr) {
  if (images.rank() != 4 || images.dim(1) != 3)
    throw ShapeError("victim: images must be (N,3,H,W)");
  Tensor x = images;
  for (int b = 0; b < kVictimBlocks; ++b) {
    if (cache) cache->conv_in[b] = x;
    x = conv2d_forward(x, params.conv_w[b], &params.conv_b[b], params.conv_spec(b));
    x = batchnorm_forward(x, params.bn_gamma[b], params.bn_beta[b], params.bn_state[b], mode,
                          cache ? &cache->bn[b] : nullptr);
    x = activation_forward(x, Activation::relu);
    if (cache) {
      cache->relu_out[b] = x;
      cache->pool_in_shape[b] = x.shape();
    }
    x = maxpool2_forward(x, cache ? &cache->pool_argmax[b] : nullptr);
  }
  if (cache) cache->gap_in = x;
  const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor feat({n, c});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      const real* src = x.data() + (i * c + ch) * hw;
      for (int64_t j = 0; j < hw; ++j) s += src[j];
      feat.data()[i * c + ch] = static_cast<real>(s / double(hw));
    }
  if (cache) cache->fc_in = feat;
  Tensor logits({n, 2});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t o = 0; o < 2; ++o) {
      double s = params.fc_b[o];
      for (int64_t ch = 0; ch < c; ++ch) s += double(params.fc_w[o * c + ch]) * feat[i * c + ch];
      logits[i * 2 + o] = static_cast<real>(s);
    }
  logits.check_finite("victim_logits");
  return logits;
}

inline Tensor softmax2(const Tensor& logits) {
  Tensor probs(logits.shape());
  for (int64_t i = 0; i < logits.dim(0); ++i) {
    const real a = logits[i * 2], b = logits[i * 2 + 1];
    const real m = std::max(a, b);
    const real ea = std::exp(a - m), eb = std::exp(b - m);
    probs[i * 2] = ea / (ea + eb);
    probs[i * 2 + 1] = eb / (ea + eb);
  }
  return probs;
}

/// Softmax probabilities in eval mode.
inline Tensor classify(VictimParams& params, const Tensor& images) {
  return softmax2(victim_logits(params, images, Mode::eval));
}

struct VictimGrads {
  std::array<Tensor, kVictimBlocks> conv_w, conv_b, bn_gamma, bn_beta;
  Tensor fc_w, fc_b;
};

inline VictimGrads victim_backward(const VictimParams& params, const VictimCache& cache,
                                   const Tensor& grad_logits) {
  VictimGrads grads;
  const int64_t n = grad_logits.dim(0);
  const int64_t c = cache.fc_in.dim(1);
  grads.fc_w = Tensor({2, c});
  grads.fc_b = Tensor({2});
  Tensor gfeat({n, c});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t o = 0; o < 2; ++o) {
      const real g = grad_logits[i * 2 + o];
      grads.fc_b[o] += g;
      for (int64_t ch = 0; ch < c; ++ch) {
        grads.fc_w[o * c + ch] += g * cache.fc_in[i * c + ch];
        gfeat[i * c + ch] += g * params.fc_w[o * c + ch];
      }
    }
  const int64_t gh = cache.gap_in.dim(2), gw = cache.gap_in.dim(3);
  Tensor g(cache.gap_in.shape());
  const real inv_hw = real(1) / static_cast<real>(gh * gw);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch) {
      const real v = gfeat[i * c + ch] * inv_hw;
      real* dst = g.data() + (i * c + ch) * gh * gw;
      for (int64_t j = 0; j < gh * gw; ++j) dst[j] = v;
    }
  for (int b = kVictimBlocks - 1; b >= 0; --b) {
    g = maxpool2_backward(g, cache.pool_argmax[b], cache.pool_in_shape[b]);
    g = activation_backward(g, cache.relu_out[b], Activation::relu);
    BatchNormGrads bn = batchnorm_backward(g, cache.bn[b], params.bn_gamma[b]);
    grads.bn_gamma[b] = std::move(bn.grad_gamma);
    grads.bn_beta[b] = std::move(bn.grad_beta);
    g = std::move(bn.grad_input);
    ConvGrads cg = conv2d_backward(g, cache.conv_in[b], params.conv_w[b], params.conv_spec(b));
    grads.conv_w[b] = std::move(cg.grad_weights);
    grads.conv_b[b] = std::move(cg.grad_bias);
    g = std::move(cg.grad_input);
  }
  return grads;
}

/// Mean cross-entropy with 2-class softmax; fills grad_logits (d loss / d
/// logits, already divided by the batch size).
inline double softmax_ce(const Tensor& logits, const std::vector<int>& labels,
                         Tensor* grad_logits) {
  const int64_t n = logits.dim(0);
  if (static_cast<int64_t>(labels.size()) != n) throw ShapeError("softmax_ce: label count");
  if (grad_logits) *grad_logits = Tensor(logits.shape());
  double loss = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const real a = logits[i * 2], b = logits[i * 2 + 1];
    const real m = std::max(a, b);
    const double ea = std::exp(double(a - m)), eb = std::exp(double(b - m));
    const double z = ea + eb;
    const double p0 = ea / z, p1 = eb / z;
    const int y = labels[static_cast<size_t>(i)];
    loss -= std::log(std::max(y == 0 ? p0 : p1, 1e-300));
    if (grad_logits) {
      (*grad_logits)[i * 2] = static_cast<real>((p0 - (y == 0 ? 1.0 : 0.0)) / double(n));
      (*grad_logits)[i * 2 + 1] = static_cast<real>((p1 - (y == 1 ? 1.0 : 0.0)) / double(n));
    }
  }
  return loss / double(n);
}

// ---------------------------------------------------------------------------
// Training

struct VictimTrainConfig {
  int iterations = 4000;
  int batch_size = 64;
  uint64_t seed = 1;
  std::array<double, 3> stage_fractions = {0.60, 0.25, 0.15};
  std::array<double, 3> stage_lr = {1.0, 0.5, 0.1};
  real rho = real(0.95);
  real eps = real(1e-6);
  int log_every = 50;
  AugmentationConfig augment_cfg = AugmentationConfig::base();
  std::array<int, kVictimBlocks> widths = {32, 64, 128};

  /// Stage boundaries in iterations; lr changes at exactly these points.
  std::array<int, 2> stage_bounds() const {
    const int b0 = static_cast<int>(iterations * stage_fractions[0]);
    const int b1 = b0 + static_cast<int>(iterations * stage_fractions[1]);
    return {b0, b1};
  }
  double lr_at(int iter) const {
    const auto b = stage_bounds();
    return iter < b[0] ? stage_lr[0] : iter < b[1] ? stage_lr[1] : stage_lr[2];
  }
};

struct VictimTrainLogRow {
  int iter;
  double loss;
  double lr;
};

inline VictimParams train_victim(const DatasetSplit& data, const VictimTrainConfig& cfg,
                                 std::vector<VictimTrainLogRow>* log = nullptr) {
  if (data.target_train.count() == 0) throw FormatError("train_victim: empty target_train");
  if (data.target_classes.size() != 2)
    throw FormatError("train_victim: exactly two target classes expected");
  VictimParams params = init_victim(cfg.widths, splitmix64(cfg.seed ^ 0x71C71C71ULL));

  std::vector<Tensor*> tensors;
  std::vector<AdadeltaState> states;
  for (int b = 0; b < kVictimBlocks; ++b) {
    tensors.push_back(&params.conv_w[b]);
    tensors.push_back(&params.conv_b[b]);
    tensors.push_back(&params.bn_gamma[b]);
    tensors.push_back(&params.bn_beta[b]);
  }
  tensors.push_back(&params.fc_w);
  tensors.push_back(&params.fc_b);
  for (Tensor* t : tensors) states.push_back(AdadeltaState::init(t->shape()));

  BatchSampler sampler(data.target_train.count(), cfg.batch_size, cfg.seed);
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const std::vector<int64_t> idx = sampler.batch_indices(iter);
    Tensor x = data.target_train.gather(idx);
    x = augment(x, cfg.augment_cfg, splitmix64(cfg.seed + 0xA7611ULL) + uint64_t(iter));
    std::vector<int> labels(idx.size());
    for (size_t i = 0; i < idx.size(); ++i)
      labels[i] = data.target_index(data.target_train.labels[static_cast<size_t>(idx[i])]);

    VictimCache cache;
    Tensor logits = victim_logits(params, x, Mode::train, &cache);
    Tensor dlogits;
    const double loss = softmax_ce(logits, labels, &dlogits);
    if (!std::isfinite(loss))
      throw NumericError("train_victim: loss diverged at iteration " + std::to_string(iter));
    VictimGrads grads = victim_backward(params, cache, dlogits);

    std::vector<const Tensor*> gts;
    for (int b = 0; b < kVictimBlocks; ++b) {
      gts.push_back(&grads.conv_w[b]);
      gts.push_back(&grads.conv_b[b]);
      gts.push_back(&grads.bn_gamma[b]);
      gts.push_back(&grads.bn_beta[b]);
    }
    gts.push_back(&grads.fc_w);
    gts.push_back(&grads.fc_b);
    const real lr = static_cast<real>(cfg.lr_at(iter));
    for (size_t i = 0; i < tensors.size(); ++i)
      adadelta_step(*tensors[i], *gts[i], states[i], cfg.rho, cfg.eps, lr);

    if (log && (iter % cfg.log_every == 0 || iter == cfg.iterations - 1))
      log->push_back({iter, loss, cfg.lr_at(iter)});
  }
  return params;
}

/// Per-true-class accuracy of the victim on a labeled image set.
inline std::vector<double> victim_accuracy(VictimParams& params, const ImageSet& set,
                                           const DatasetSplit& split, int batch = 256) {
  std::vector<int64_t> correct(split.target_classes.size(), 0);
  std::vector<int64_t> total(split.target_classes.size(), 0);
  for (int64_t begin = 0; begin < set.count(); begin += batch) {
    const int64_t end = std::min(set.count(), begin + batch);
    Tensor probs = classify(params, set.gather_range(begin, end));
    for (int64_t i = 0; i < end - begin; ++i) {
      const int truth = split.target_index(set.labels[static_cast<size_t>(begin + i)]);
      const int pred = probs[i * 2 + 1] > probs[i * 2] ? 1 : 0;
      ++total[static_cast<size_t>(truth)];
      if (pred == truth) ++correct[static_cast<size_t>(truth)];
    }
  }
  std::vector<double> acc(split.target_classes.size(), 0.0);
  for (size_t i = 0; i < acc.size(); ++i)
    acc[i] = total[i] ? 100.0 * double(correct[i]) / double(total[i]) : 0.0;
  return acc;
}

}  // namespace ftattack
