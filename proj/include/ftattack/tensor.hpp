#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ftattack/errors.hpp"

namespace ftattack {

// Compute element type. Default is 32-bit; defining FTATTACK_REAL64 switches
// the whole library to 64-bit for high-precision gradient verification.
#ifdef FTATTACK_REAL64
using real = double;
#else
using real = float;
#endif

/// Dense n-dimensional array, contiguous row-major. Images and feature maps
/// use (N, C, H, W).
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
    int64_t n = 1;
    for (int64_t d : shape_) {
      if (d <= 0) throw ShapeError("Tensor: non-positive dimension");
      n *= d;
    }
    data_.assign(static_cast<size_t>(n), real(0));
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int64_t> shape, real value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  static Tensor from_values(std::vector<int64_t> shape, std::vector<real> values) {
    Tensor t;
    t.shape_ = std::move(shape);
    int64_t n = 1;
    for (int64_t d : t.shape_) n *= d;
    if (n != static_cast<int64_t>(values.size()))
      throw ShapeError("Tensor::from_values: value count does not match shape");
    t.data_ = std::move(values);
    return t;
  }

  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  int rank() const { return static_cast<int>(shape_.size()); }
  const std::vector<int64_t>& shape() const { return shape_; }
  int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }

  real* data() { return data_.data(); }
  const real* data() const { return data_.data(); }

  real& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  real operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // 4-d accessors for the (N, C, H, W) layout.
  real& at4(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }
  real at4(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << ")";
    return os.str();
  }

  void fill(real v) { std::fill(data_.begin(), data_.end(), v); }

  /// Hard error on NaN/Inf; `where` names the producing operation.
  void check_finite(const std::string& where) const {
    for (real v : data_) {
      if (!std::isfinite(v)) throw NumericError(where + ": non-finite value in output");
    }
  }

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  std::vector<int64_t> shape_;
  std::vector<real> data_;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const std::string& where) {
  if (!a.same_shape(b))
    throw ShapeError(where + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace ftattack
