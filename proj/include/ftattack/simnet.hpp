#pragma once

#include <utility>

#include "ftattack/kernels.hpp"
#include "ftattack/nn.hpp"

namespace ftattack {

/// Fixed feature extractor: the kernel bank applied depthwise to every input
/// channel, feature maps concatenated kernel-major (output channel
/// m * C + c for kernel m on input channel c). No bias, no activation, and
/// the weights never change after construction.
class SimNet {
 public:
  explicit SimNet(KernelBank bank, Padding padding = Padding::valid, bool grayscale = false)
      : bank_(std::move(bank)), padding_(padding), grayscale_(grayscale) {
    const int d = bank_.kernel_size();
    weights_ = Tensor({bank_.count(), 1, d, d});
    int64_t idx = 0;
    for (const Kernel2D& k : bank_.kernels())
      for (double v : k.weights) weights_[idx++] = static_cast<real>(v);
  }

  const KernelBank& bank() const { return bank_; }
  const Tensor& weights() const { return weights_; }
  Padding padding() const { return padding_; }
  bool grayscale() const { return grayscale_; }

  int64_t feature_channels(int64_t image_channels) const {
    return bank_.count() * (grayscale_ ? 1 : image_channels);
  }

  Tensor simulate(const Tensor& image) const {
    if (image.rank() != 4) throw ShapeError("simulate: image must be (N,C,H,W)");
    const Tensor& input = grayscale_ ? to_gray(image) : image;
    return conv2d_forward(input, weights_, nullptr, spec_for(input.dim(1)));
  }

  /// Input gradient of the fixed convolution; no weight gradients exist.
  /// Spatial extents of the image are recovered from the feature shape.
  Tensor simulate_backward(const Tensor& grad_features, int64_t image_channels = 3) const {
    if (grad_features.rank() != 4) throw ShapeError("simulate_backward: grad must be (N,C,H,W)");
    const int64_t cin = grayscale_ ? 1 : image_channels;
    if (grad_features.dim(1) != bank_.count() * cin)
      throw ShapeError("simulate_backward: feature channels do not match the bank");
    const int d = bank_.kernel_size();
    const int64_t grow = padding_ == Padding::valid ? d - 1 : 0;
    const int64_t h = grad_features.dim(2) + grow, w = grad_features.dim(3) + grow;
    Tensor grad = conv2d_backward_input(grad_features, weights_, spec_for(cin), h, w);
    if (!grayscale_) return grad;
    // Undo the channel average: each color channel received 1/3 of the value.
    Tensor out({grad.dim(0), image_channels, h, w});
    const real inv = real(1) / static_cast<real>(image_channels);
    for (int64_t n = 0; n < grad.dim(0); ++n)
      for (int64_t c = 0; c < image_channels; ++c)
        for (int64_t j = 0; j < h * w; ++j)
          out.data()[(n * image_channels + c) * h * w + j] =
              grad.data()[n * h * w + j] * inv;
    return out;
  }

 private:
  ConvSpec spec_for(int64_t cin) const {
    ConvSpec spec;
    spec.in_channels = cin;
    spec.out_channels = bank_.count() * cin;
    spec.kernel_size = bank_.kernel_size();
    spec.padding = padding_;
    spec.depthwise = true;
    return spec;
  }

  static Tensor to_gray(const Tensor& image) {
    const int64_t n = image.dim(0), c = image.dim(1), hw = image.dim(2) * image.dim(3);
    Tensor gray({n, 1, image.dim(2), image.dim(3)});
    const real inv = real(1) / static_cast<real>(c);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < hw; ++j) {
        real s = 0;
        for (int64_t ch = 0; ch < c; ++ch) s += image.data()[(i * c + ch) * hw + j];
        gray.data()[i * hw + j] = s * inv;
      }
    return gray;
  }

  KernelBank bank_;
  Tensor weights_;
  Padding padding_;
  bool grayscale_;
};

}  // namespace ftattack
