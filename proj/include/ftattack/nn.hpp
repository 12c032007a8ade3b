#pragma once

#include <algorithm>
#include <cstring>
#include <optional>
#include <vector>

#include "ftattack/blas.hpp"
#include "ftattack/parallel.hpp"
#include "ftattack/tensor.hpp"

namespace ftattack {

enum class Padding { valid, same_zero };
enum class Mode { train, eval };

struct ConvSpec {
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int kernel_size = 0;
  Padding padding = Padding::valid;
  bool depthwise = false;  // weights (M,1,k,k), out = M * in_channels, kernel-major order

  int pad() const { return padding == Padding::same_zero ? (kernel_size - 1) / 2 : 0; }
};

namespace detail {

// Samples per work chunk. Fixed so that chunk boundaries (and therefore the
// gradient reduction order) do not depend on the worker count.
inline constexpr int64_t kConvChunk = 8;

inline void im2col(const real* src, int64_t channels, int64_t h, int64_t w, int k, int p,
                   int64_t ho, int64_t wo, real* col, int64_t col_stride, int64_t col_offset) {
  for (int64_t c = 0; c < channels; ++c) {
    for (int u = 0; u < k; ++u) {
      for (int v = 0; v < k; ++v) {
        real* row = col + ((c * k + u) * k + v) * col_stride + col_offset;
        for (int64_t y = 0; y < ho; ++y) {
          const int64_t iy = y + u - p;
          real* dst = row + y * wo;
          if (iy < 0 || iy >= h) {
            std::memset(dst, 0, static_cast<size_t>(wo) * sizeof(real));
            continue;
          }
          const real* srow = src + (c * h + iy) * w;
          const int64_t ox_lo = std::max<int64_t>(0, p - v);
          const int64_t ox_hi = std::min<int64_t>(wo, w + p - v);
          if (ox_lo > 0) std::memset(dst, 0, static_cast<size_t>(ox_lo) * sizeof(real));
          if (ox_hi < wo)
            std::memset(dst + ox_hi, 0, static_cast<size_t>(wo - ox_hi) * sizeof(real));
          if (ox_hi > ox_lo)
            std::memcpy(dst + ox_lo, srow + ox_lo + v - p,
                        static_cast<size_t>(ox_hi - ox_lo) * sizeof(real));
        }
      }
    }
  }
}

inline void col2im_add(const real* col, int64_t col_stride, int64_t col_offset, int64_t channels,
                       int64_t h, int64_t w, int k, int p, int64_t ho, int64_t wo, real* dst) {
  for (int64_t c = 0; c < channels; ++c) {
    for (int u = 0; u < k; ++u) {
      for (int v = 0; v < k; ++v) {
        const real* row = col + ((c * k + u) * k + v) * col_stride + col_offset;
        for (int64_t y = 0; y < ho; ++y) {
          const int64_t iy = y + u - p;
          if (iy < 0 || iy >= h) continue;
          real* drow = dst + (c * h + iy) * w;
          const real* srow = row + y * wo;
          const int64_t ox_lo = std::max<int64_t>(0, p - v);
          const int64_t ox_hi = std::min<int64_t>(wo, w + p - v);
          for (int64_t ox = ox_lo; ox < ox_hi; ++ox) drow[ox + v - p] += srow[ox];
        }
      }
    }
  }
}

inline void validate_conv(const Tensor& input, const Tensor& weights, const Tensor* bias,
                          const ConvSpec& spec) {
  if (input.rank() != 4) throw ShapeError("conv2d: input must be (N,C,H,W)");
  if (weights.rank() != 4) throw ShapeError("conv2d: weights must be rank 4");
  const int k = spec.kernel_size;
  if (k < 1 || k % 2 == 0) throw SizeError("conv2d: kernel size must be odd and positive");
  if (input.dim(1) != spec.in_channels)
    throw ShapeError("conv2d: input channels " + std::to_string(input.dim(1)) +
                     " do not match spec " + std::to_string(spec.in_channels));
  if (weights.dim(2) != k || weights.dim(3) != k)
    throw ShapeError("conv2d: weight spatial dims do not match kernel_size");
  if (spec.depthwise) {
    if (weights.dim(1) != 1) throw ShapeError("conv2d: depthwise weights must be (M,1,k,k)");
    if (spec.out_channels != weights.dim(0) * spec.in_channels)
      throw ShapeError("conv2d: depthwise out_channels must be in_channels * multiplier");
  } else {
    if (weights.dim(0) != spec.out_channels || weights.dim(1) != spec.in_channels)
      throw ShapeError("conv2d: weights " + weights.shape_str() + " do not match spec");
  }
  if (bias && bias->size() != spec.out_channels)
    throw ShapeError("conv2d: bias length does not match out_channels");
  const int64_t extent = k - 2 * spec.pad();
  if (input.dim(2) < extent || input.dim(3) < extent)
    throw SizeError("conv2d: input " + input.shape_str() + " smaller than kernel");
}

}  // namespace detail

/// Cross-correlation (no kernel flip), matching CNN convention.
inline Tensor conv2d_forward(const Tensor& input, const Tensor& weights, const Tensor* bias,
                             const ConvSpec& spec) {
  detail::validate_conv(input, weights, bias, spec);
  const int64_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int k = spec.kernel_size, p = spec.pad();
  const int64_t ho = h - k + 1 + 2 * p, wo = w - k + 1 + 2 * p;
  const int64_t hw = ho * wo;
  const int64_t cout = spec.out_channels;
  Tensor out({n, cout, ho, wo});

  if (!spec.depthwise) {
    const int64_t ck = cin * k * k;
    parallel_chunks(n, detail::kConvChunk, [&](int64_t, int64_t b, int64_t e) {
      const int64_t cols = (e - b) * hw;
      std::vector<real> col(static_cast<size_t>(ck * cols));
      std::vector<real> gout(static_cast<size_t>(cout * cols));
      for (int64_t i = b; i < e; ++i)
        detail::im2col(input.data() + i * cin * h * w, cin, h, w, k, p, ho, wo, col.data(), cols,
                       (i - b) * hw);
      gemm(false, false, cout, cols, ck, real(1), weights.data(), ck, col.data(), cols, real(0),
           gout.data(), cols);
      for (int64_t i = b; i < e; ++i) {
        for (int64_t oc = 0; oc < cout; ++oc) {
          real* dst = out.data() + (i * cout + oc) * hw;
          const real* srow = gout.data() + oc * cols + (i - b) * hw;
          if (bias) {
            const real bv = (*bias)[oc];
            for (int64_t j = 0; j < hw; ++j) dst[j] = srow[j] + bv;
          } else {
            std::memcpy(dst, srow, static_cast<size_t>(hw) * sizeof(real));
          }
        }
      }
    });
  } else {
    const int64_t m = weights.dim(0);
    const int64_t k2 = static_cast<int64_t>(k) * k;
    parallel_chunks(n, detail::kConvChunk, [&](int64_t, int64_t b, int64_t e) {
      std::vector<real> col(static_cast<size_t>(k2 * hw));
      std::vector<real> tmp(static_cast<size_t>(m * hw));
      for (int64_t i = b; i < e; ++i) {
        for (int64_t c = 0; c < cin; ++c) {
          detail::im2col(input.data() + (i * cin + c) * h * w, 1, h, w, k, p, ho, wo, col.data(),
                         hw, 0);
          gemm(false, false, m, hw, k2, real(1), weights.data(), k2, col.data(), hw, real(0),
               tmp.data(), hw);
          for (int64_t j = 0; j < m; ++j) {
            const int64_t oc = j * cin + c;
            real* dst = out.data() + (i * cout + oc) * hw;
            const real bv = bias ? (*bias)[oc] : real(0);
            const real* srow = tmp.data() + j * hw;
            for (int64_t q = 0; q < hw; ++q) dst[q] = srow[q] + bv;
          }
        }
      }
    });
  }
  out.check_finite("conv2d_forward");
  return out;
}

struct ConvGrads {
  Tensor grad_input;
  Tensor grad_weights;
  Tensor grad_bias;
};

/// Input gradient only; the weight side is skipped (fixed-kernel layers).
inline Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& weights,
                                    const ConvSpec& spec, int64_t h, int64_t w) {
  const int64_t n = grad_out.dim(0), cout = grad_out.dim(1);
  const int64_t ho = grad_out.dim(2), wo = grad_out.dim(3);
  const int64_t hw = ho * wo;
  const int k = spec.kernel_size, p = spec.pad();
  const int64_t cin = spec.in_channels;
  if (cout != spec.out_channels) throw ShapeError("conv2d_backward: grad channel mismatch");
  Tensor grad_input({n, cin, h, w});

  if (!spec.depthwise) {
    const int64_t ck = cin * k * k;
    parallel_chunks(n, detail::kConvChunk, [&](int64_t, int64_t b, int64_t e) {
      const int64_t cols = (e - b) * hw;
      std::vector<real> gbuf(static_cast<size_t>(cout * cols));
      std::vector<real> gcol(static_cast<size_t>(ck * cols));
      for (int64_t i = b; i < e; ++i)
        for (int64_t oc = 0; oc < cout; ++oc)
          std::memcpy(gbuf.data() + oc * cols + (i - b) * hw,
                      grad_out.data() + (i * cout + oc) * hw,
                      static_cast<size_t>(hw) * sizeof(real));
      gemm(true, false, ck, cols, cout, real(1), weights.data(), ck, gbuf.data(), cols, real(0),
           gcol.data(), cols);
      for (int64_t i = b; i < e; ++i)
        detail::col2im_add(gcol.data(), cols, (i - b) * hw, cin, h, w, k, p, ho, wo,
                           grad_input.data() + i * cin * h * w);
    });
  } else {
    const int64_t m = weights.dim(0);
    const int64_t k2 = static_cast<int64_t>(k) * k;
    parallel_chunks(n, detail::kConvChunk, [&](int64_t, int64_t b, int64_t e) {
      std::vector<real> gbuf(static_cast<size_t>(m * hw));
      std::vector<real> gcol(static_cast<size_t>(k2 * hw));
      for (int64_t i = b; i < e; ++i) {
        for (int64_t c = 0; c < cin; ++c) {
          for (int64_t j = 0; j < m; ++j)
            std::memcpy(gbuf.data() + j * hw, grad_out.data() + (i * cout + j * cin + c) * hw,
                        static_cast<size_t>(hw) * sizeof(real));
          gemm(true, false, k2, hw, m, real(1), weights.data(), k2, gbuf.data(), hw, real(0),
               gcol.data(), hw);
          detail::col2im_add(gcol.data(), hw, 0, 1, h, w, k, p, ho, wo,
                             grad_input.data() + (i * cin + c) * h * w);
        }
      }
    });
  }
  return grad_input;
}

/// Exact gradients of conv2d_forward. Per-chunk partial weight gradients are
/// reduced in chunk order, so results do not depend on the worker count.
inline ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& saved_input,
                                 const Tensor& weights, const ConvSpec& spec) {
  detail::validate_conv(saved_input, weights, nullptr, spec);
  const int64_t n = saved_input.dim(0), cin = saved_input.dim(1);
  const int64_t h = saved_input.dim(2), w = saved_input.dim(3);
  const int k = spec.kernel_size, p = spec.pad();
  const int64_t ho = h - k + 1 + 2 * p, wo = w - k + 1 + 2 * p;
  const int64_t hw = ho * wo;
  const int64_t cout = spec.out_channels;
  if (grad_out.rank() != 4 || grad_out.dim(0) != n || grad_out.dim(1) != cout ||
      grad_out.dim(2) != ho || grad_out.dim(3) != wo)
    throw ShapeError("conv2d_backward: grad_out " + grad_out.shape_str() +
                     " inconsistent with forward pass");

  ConvGrads grads;
  grads.grad_input = Tensor({n, cin, h, w});
  grads.grad_weights = Tensor(weights.shape());
  grads.grad_bias = Tensor({cout});

  const int64_t wsize = weights.size();
  const int64_t n_chunks = (n + detail::kConvChunk - 1) / detail::kConvChunk;
  std::vector<real> wpart(static_cast<size_t>(n_chunks * wsize), real(0));
  std::vector<real> bpart(static_cast<size_t>(n_chunks * cout), real(0));

  if (!spec.depthwise) {
    const int64_t ck = cin * k * k;
    parallel_chunks(n, detail::kConvChunk, [&](int64_t chunk, int64_t b, int64_t e) {
      const int64_t cols = (e - b) * hw;
      std::vector<real> col(static_cast<size_t>(ck * cols));
      std::vector<real> gbuf(static_cast<size_t>(cout * cols));
      std::vector<real> gcol(static_cast<size_t>(ck * cols));
      for (int64_t i = b; i < e; ++i) {
        detail::im2col(saved_input.data() + i * cin * h * w, cin, h, w, k, p, ho, wo, col.data(),
                       cols, (i - b) * hw);
        for (int64_t oc = 0; oc < cout; ++oc)
          std::memcpy(gbuf.data() + oc * cols + (i - b) * hw,
                      grad_out.data() + (i * cout + oc) * hw,
                      static_cast<size_t>(hw) * sizeof(real));
      }
      gemm(false, true, cout, ck, cols, real(1), gbuf.data(), cols, col.data(), cols, real(0),
           wpart.data() + chunk * wsize, ck);
      real* bp = bpart.data() + chunk * cout;
      for (int64_t oc = 0; oc < cout; ++oc) {
        double s = 0.0;
        const real* row = gbuf.data() + oc * cols;
        for (int64_t j = 0; j < cols; ++j) s += row[j];
        bp[oc] = static_cast<real>(s);
      }
      gemm(true, false, ck, cols, cout, real(1), weights.data(), ck, gbuf.data(), cols, real(0),
           gcol.data(), cols);
      for (int64_t i = b; i < e; ++i)
        detail::col2im_add(gcol.data(), cols, (i - b) * hw, cin, h, w, k, p, ho, wo,
                           grads.grad_input.data() + i * cin * h * w);
    });
  } else {
    const int64_t m = weights.dim(0);
    const int64_t k2 = static_cast<int64_t>(k) * k;
    parallel_chunks(n, detail::kConvChunk, [&](int64_t chunk, int64_t b, int64_t e) {
      std::vector<real> col(static_cast<size_t>(k2 * hw));
      std::vector<real> gbuf(static_cast<size_t>(m * hw));
      std::vector<real> gcol(static_cast<size_t>(k2 * hw));
      real* wp = wpart.data() + chunk * wsize;
      real* bp = bpart.data() + chunk * cout;
      for (int64_t i = b; i < e; ++i) {
        for (int64_t c = 0; c < cin; ++c) {
          detail::im2col(saved_input.data() + (i * cin + c) * h * w, 1, h, w, k, p, ho, wo,
                         col.data(), hw, 0);
          for (int64_t j = 0; j < m; ++j) {
            const real* grow = grad_out.data() + (i * cout + j * cin + c) * hw;
            std::memcpy(gbuf.data() + j * hw, grow, static_cast<size_t>(hw) * sizeof(real));
            double s = 0.0;
            for (int64_t q = 0; q < hw; ++q) s += grow[q];
            bp[j * cin + c] += static_cast<real>(s);
          }
          gemm(false, true, m, k2, hw, real(1), gbuf.data(), hw, col.data(), hw, real(1), wp, k2);
          gemm(true, false, k2, hw, m, real(1), weights.data(), k2, gbuf.data(), hw, real(0),
               gcol.data(), hw);
          detail::col2im_add(gcol.data(), hw, 0, 1, h, w, k, p, ho, wo,
                             grads.grad_input.data() + (i * cin + c) * h * w);
        }
      }
    });
  }

  for (int64_t chunk = 0; chunk < n_chunks; ++chunk) {
    const real* wp = wpart.data() + chunk * wsize;
    for (int64_t j = 0; j < wsize; ++j) grads.grad_weights[j] += wp[j];
    const real* bp = bpart.data() + chunk * cout;
    for (int64_t oc = 0; oc < cout; ++oc) grads.grad_bias[oc] += bp[oc];
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Batch normalization (population variance, eps 1e-5, running momentum 0.9)

struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  real momentum = real(0.9);
  real eps = real(1e-5);

  static BatchNormState init(int64_t channels) {
    BatchNormState s;
    s.running_mean = Tensor({channels});
    s.running_var = Tensor::full({channels}, real(1));
    return s;
  }
};

struct BatchNormCache {
  Tensor xhat;
  Tensor inv_std;  // per channel
  int64_t count_per_channel = 0;
};

inline Tensor batchnorm_forward(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                                BatchNormState& state, Mode mode,
                                BatchNormCache* cache = nullptr) {
  if (input.rank() != 4) throw ShapeError("batchnorm: input must be (N,C,H,W)");
  const int64_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (gamma.size() != c || beta.size() != c || state.running_mean.size() != c ||
      state.running_var.size() != c)
    throw ShapeError("batchnorm: channel count mismatch");
  const int64_t m = n * hw;
  Tensor out(input.shape());
  if (cache) {
    cache->xhat = Tensor(input.shape());
    cache->inv_std = Tensor({c});
    cache->count_per_channel = m;
  }

  parallel_for(c, [&](int64_t ch) {
    real mean, inv_std;
    if (mode == Mode::train) {
      double sum = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const real* src = input.data() + (i * c + ch) * hw;
        for (int64_t j = 0; j < hw; ++j) sum += src[j];
      }
      mean = static_cast<real>(sum / static_cast<double>(m));
      double var_sum = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const real* src = input.data() + (i * c + ch) * hw;
        for (int64_t j = 0; j < hw; ++j) {
          const double d = static_cast<double>(src[j]) - static_cast<double>(mean);
          var_sum += d * d;
        }
      }
      const real var = static_cast<real>(var_sum / static_cast<double>(m));
      inv_std = real(1) / std::sqrt(var + state.eps);
      state.running_mean[ch] = state.momentum * state.running_mean[ch] +
                               (real(1) - state.momentum) * mean;
      state.running_var[ch] =
          state.momentum * state.running_var[ch] + (real(1) - state.momentum) * var;
    } else {
      mean = state.running_mean[ch];
      inv_std = real(1) / std::sqrt(state.running_var[ch] + state.eps);
    }
    const real g = gamma[ch], bta = beta[ch];
    for (int64_t i = 0; i < n; ++i) {
      const real* src = input.data() + (i * c + ch) * hw;
      real* dst = out.data() + (i * c + ch) * hw;
      real* xh = cache ? cache->xhat.data() + (i * c + ch) * hw : nullptr;
      for (int64_t j = 0; j < hw; ++j) {
        const real v = (src[j] - mean) * inv_std;
        if (xh) xh[j] = v;
        dst[j] = g * v + bta;
      }
    }
    if (cache) cache->inv_std[ch] = inv_std;
  });
  return out;
}

struct BatchNormGrads {
  Tensor grad_input;
  Tensor grad_gamma;
  Tensor grad_beta;
};

/// Gradient of the train-mode pass, including the batch-statistic terms.
inline BatchNormGrads batchnorm_backward(const Tensor& grad_out, const BatchNormCache& cache,
                                         const Tensor& gamma) {
  require_same_shape(grad_out, cache.xhat, "batchnorm_backward");
  const int64_t n = grad_out.dim(0), c = grad_out.dim(1);
  const int64_t hw = grad_out.dim(2) * grad_out.dim(3);
  const int64_t m = cache.count_per_channel;
  BatchNormGrads grads;
  grads.grad_input = Tensor(grad_out.shape());
  grads.grad_gamma = Tensor({c});
  grads.grad_beta = Tensor({c});

  parallel_for(c, [&](int64_t ch) {
    double s1 = 0.0, s2 = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const real* dy = grad_out.data() + (i * c + ch) * hw;
      const real* xh = cache.xhat.data() + (i * c + ch) * hw;
      for (int64_t j = 0; j < hw; ++j) {
        s1 += dy[j];
        s2 += static_cast<double>(dy[j]) * xh[j];
      }
    }
    grads.grad_beta[ch] = static_cast<real>(s1);
    grads.grad_gamma[ch] = static_cast<real>(s2);
    const real mean_dy = static_cast<real>(s1 / static_cast<double>(m));
    const real mean_dy_xhat = static_cast<real>(s2 / static_cast<double>(m));
    const real scale = gamma[ch] * cache.inv_std[ch];
    for (int64_t i = 0; i < n; ++i) {
      const real* dy = grad_out.data() + (i * c + ch) * hw;
      const real* xh = cache.xhat.data() + (i * c + ch) * hw;
      real* dx = grads.grad_input.data() + (i * c + ch) * hw;
      for (int64_t j = 0; j < hw; ++j)
        dx[j] = scale * (dy[j] - mean_dy - xh[j] * mean_dy_xhat);
    }
  });
  return grads;
}

// ---------------------------------------------------------------------------
// Activations

enum class Activation { relu, sigmoid };

template <class T>
inline T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

inline Tensor activation_forward(const Tensor& input, Activation kind) {
  Tensor out(input.shape());
  const real* src = input.data();
  real* dst = out.data();
  parallel_for(input.size(), [&](int64_t i) {
    dst[i] = kind == Activation::relu ? std::max(real(0), src[i]) : sigmoid_scalar(src[i]);
  });
  return out;
}

/// relu uses subgradient 0 at the kink; sigmoid derivative is s * (1 - s).
/// `saved_output` is the forward result (sufficient for both kinds).
inline Tensor activation_backward(const Tensor& grad_out, const Tensor& saved_output,
                                  Activation kind) {
  require_same_shape(grad_out, saved_output, "activation_backward");
  Tensor grad(grad_out.shape());
  const real* g = grad_out.data();
  const real* s = saved_output.data();
  real* dst = grad.data();
  parallel_for(grad_out.size(), [&](int64_t i) {
    dst[i] = kind == Activation::relu ? (s[i] > real(0) ? g[i] : real(0))
                                      : g[i] * s[i] * (real(1) - s[i]);
  });
  return grad;
}

}  // namespace ftattack
