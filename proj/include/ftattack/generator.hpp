#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "ftattack/nn.hpp"
#include "ftattack/rng.hpp"

namespace ftattack {

inline constexpr int kGeneratorLayers = 5;

/// Five stride-free 3x3 convolutions, layers 1-4 followed by batch norm and
/// ReLU, layer 5 by a sigmoid; spatial size is preserved everywhere.
struct GeneratorParams {
  std::array<Tensor, kGeneratorLayers> conv_w;
  std::array<Tensor, kGeneratorLayers> conv_b;
  std::array<Tensor, kGeneratorLayers - 1> bn_gamma;
  std::array<Tensor, kGeneratorLayers - 1> bn_beta;
  std::array<BatchNormState, kGeneratorLayers - 1> bn_state;
  int hidden_width = 0;

  int64_t layer_in(int layer) const { return layer == 0 ? 3 : hidden_width; }
  int64_t layer_out(int layer) const { return layer == kGeneratorLayers - 1 ? 3 : hidden_width; }

  ConvSpec conv_spec(int layer) const {
    ConvSpec s;
    s.in_channels = layer_in(layer);
    s.out_channels = layer_out(layer);
    s.kernel_size = 3;
    s.padding = Padding::same_zero;
    return s;
  }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& t : conv_w) n += t.size();
    for (const auto& t : conv_b) n += t.size();
    for (const auto& t : bn_gamma) n += t.size();
    for (const auto& t : bn_beta) n += t.size();
    return n;
  }
};

/// He-uniform initialization, deterministic for a fixed seed.
inline GeneratorParams init_generator(int hidden_width, uint64_t seed) {
  if (hidden_width < 1) throw SizeError("init_generator: hidden width must be >= 1");
  GeneratorParams p;
  p.hidden_width = hidden_width;
  for (int layer = 0; layer < kGeneratorLayers; ++layer) {
    const int64_t cin = p.layer_in(layer), cout = p.layer_out(layer);
    p.conv_w[layer] = Tensor({cout, cin, 3, 3});
    p.conv_b[layer] = Tensor({cout});
    const double limit = std::sqrt(6.0 / (double(cin) * 9.0));
    Rng rng = Rng::keyed(seed, 0x67656e00ULL + uint64_t(layer));
    for (int64_t i = 0; i < p.conv_w[layer].size(); ++i)
      p.conv_w[layer][i] = static_cast<real>(rng.uniform(-limit, limit));
  }
  for (int i = 0; i < kGeneratorLayers - 1; ++i) {
    p.bn_gamma[i] = Tensor::full({hidden_width}, real(1));
    p.bn_beta[i] = Tensor({hidden_width});
    p.bn_state[i] = BatchNormState::init(hidden_width);
  }
  return p;
}

struct GeneratorCache {
  std::array<Tensor, kGeneratorLayers> conv_in;    // input of each conv
  std::array<BatchNormCache, kGeneratorLayers - 1> bn;
  std::array<Tensor, kGeneratorLayers - 1> relu_out;
  Tensor output;  // final sigmoid output
};

/// Maps an image in [0,1] to an image of identical shape in (0,1).
/// Train mode uses batch statistics and updates the running stats.
inline Tensor generate(GeneratorParams& params, const Tensor& image, Mode mode,
                       GeneratorCache* cache = nullptr) {
  if (image.rank() != 4 || image.dim(1) != 3)
    throw ShapeError("generate: image must be (N,3,H,W)");
  Tensor x = image;
  for (int layer = 0; layer < kGeneratorLayers; ++layer) {
    if (cache) cache->conv_in[layer] = x;
    x = conv2d_forward(x, params.conv_w[layer], &params.conv_b[layer], params.conv_spec(layer));
    if (layer < kGeneratorLayers - 1) {
      x = batchnorm_forward(x, params.bn_gamma[layer], params.bn_beta[layer],
                            params.bn_state[layer], mode, cache ? &cache->bn[layer] : nullptr);
      x = activation_forward(x, Activation::relu);
      if (cache) cache->relu_out[layer] = x;
    } else {
      x = activation_forward(x, Activation::sigmoid);
      if (cache) cache->output = x;
    }
  }
  x.check_finite("generate");
  return x;
}

struct GeneratorGrads {
  std::array<Tensor, kGeneratorLayers> conv_w;
  std::array<Tensor, kGeneratorLayers> conv_b;
  std::array<Tensor, kGeneratorLayers - 1> bn_gamma;
  std::array<Tensor, kGeneratorLayers - 1> bn_beta;
};

/// Exact gradients of the train-mode forward pass; grad_out is the loss
/// gradient with respect to the generated image.
inline GeneratorGrads generate_backward(const GeneratorParams& params,
                                        const GeneratorCache& cache, const Tensor& grad_out) {
  GeneratorGrads grads;
  Tensor g = activation_backward(grad_out, cache.output, Activation::sigmoid);
  for (int layer = kGeneratorLayers - 1; layer >= 0; --layer) {
    if (layer < kGeneratorLayers - 1) {
      g = activation_backward(g, cache.relu_out[layer], Activation::relu);
      BatchNormGrads bn = batchnorm_backward(g, cache.bn[layer], params.bn_gamma[layer]);
      grads.bn_gamma[layer] = std::move(bn.grad_gamma);
      grads.bn_beta[layer] = std::move(bn.grad_beta);
      g = std::move(bn.grad_input);
    }
    ConvGrads cg = conv2d_backward(g, cache.conv_in[layer], params.conv_w[layer],
                                   params.conv_spec(layer));
    grads.conv_w[layer] = std::move(cg.grad_weights);
    grads.conv_b[layer] = std::move(cg.grad_bias);
    g = std::move(cg.grad_input);
  }
  return grads;
}

}  // namespace ftattack
