#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "ftattack/errors.hpp"

namespace ftattack {

enum class KernelKind { FT1, FT0, Rotated };

/// cos/sin of an angle given in degrees, with exact values at the axis
/// multiples so that 0°/90°/180°/270° rotations are bit-exact.
inline double cos_deg(double deg) {
  double a = std::fmod(deg, 360.0);
  if (a < 0) a += 360.0;
  if (a == 0.0) return 1.0;
  if (a == 90.0 || a == 270.0) return 0.0;
  if (a == 180.0) return -1.0;
  return std::cos(a * 3.14159265358979323846 / 180.0);
}

inline double sin_deg(double deg) {
  double a = std::fmod(deg, 360.0);
  if (a < 0) a += 360.0;
  if (a == 0.0 || a == 180.0) return 0.0;
  if (a == 90.0) return 1.0;
  if (a == 270.0) return -1.0;
  return std::sin(a * 3.14159265358979323846 / 180.0);
}

/// A single d x d handcrafted kernel. Row index x, column index y (0-based
/// internally); the FT1 row profile is odd in x, so the unrotated kernel
/// responds to vertical gradients.
struct Kernel2D {
  int size = 0;
  std::vector<double> weights;  // row-major, size*size entries
  double angle_deg = 0.0;
  KernelKind kind = KernelKind::FT1;

  double at(int x, int y) const { return weights[static_cast<size_t>(x) * size + y]; }
  double& at(int x, int y) { return weights[static_cast<size_t>(x) * size + y]; }

  double sum() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }

  Kernel2D transposed() const {
    Kernel2D t = *this;
    for (int x = 0; x < size; ++x)
      for (int y = 0; y < size; ++y) t.at(x, y) = at(y, x);
    return t;
  }

  /// Optional L1 normalization (sum of |w| becomes 1). Off by default: the
  /// generating formula carries no scaling.
  Kernel2D l1_normalized() const {
    double l1 = 0.0;
    for (double w : weights) l1 += std::abs(w);
    Kernel2D t = *this;
    if (l1 > 0.0)
      for (double& w : t.weights) w /= l1;
    return t;
  }
};

inline void require_kernel_size(int d, const char* who) {
  if (d < 3 || d % 2 == 0)
    throw SizeError(std::string(who) + ": kernel size must be odd and >= 3, got " +
                    std::to_string(d));
}

/// Triangular basic function of width d, evaluated at 1-based position i:
/// 1 - |2i - d - 1| / (d + 1).
inline double triangular_profile(int i, int d) {
  return 1.0 - std::abs(2.0 * i - d - 1.0) / (d + 1.0);
}

/// First-degree F-transform kernel:
///   w(x, y) = (x - (d+1)/2) * (1 - |2x-d-1|/(d+1)) * (1 - |2y-d-1|/(d+1)),
/// x, y in [1, d]. Separable into an odd row profile and an even column
/// profile; every row sums to a multiple of the profile, and the whole
/// kernel sums to zero.
inline Kernel2D ft1_kernel(int d) {
  require_kernel_size(d, "ft1_kernel");
  Kernel2D k;
  k.size = d;
  k.kind = KernelKind::FT1;
  k.angle_deg = 0.0;
  k.weights.resize(static_cast<size_t>(d) * d);
  const double center = (d + 1.0) / 2.0;
  for (int x = 1; x <= d; ++x) {
    const double u = (x - center) * triangular_profile(x, d);
    for (int y = 1; y <= d; ++y) {
      k.at(x - 1, y - 1) = u * triangular_profile(y, d);
    }
  }
  return k;
}

/// Zero-degree F-transform kernel: tensor product of the triangular basic
/// function, normalized to sum 1 so it acts as a weighted average.
inline Kernel2D ft0_kernel(int d) {
  require_kernel_size(d, "ft0_kernel");
  Kernel2D k;
  k.size = d;
  k.kind = KernelKind::FT0;
  k.angle_deg = 0.0;
  k.weights.resize(static_cast<size_t>(d) * d);
  double total = 0.0;
  for (int x = 1; x <= d; ++x)
    for (int y = 1; y <= d; ++y) {
      double w = triangular_profile(x, d) * triangular_profile(y, d);
      k.at(x - 1, y - 1) = w;
      total += w;
    }
  for (double& w : k.weights) w /= total;
  return k;
}

/// Directional combination K_alpha = K_x cos(alpha) + K_y sin(alpha).
/// `ky` is expected to be the transpose of `kx`.
inline Kernel2D rotate_kernel(const Kernel2D& kx, const Kernel2D& ky, double alpha_deg) {
  if (kx.size != ky.size)
    throw SizeError("rotate_kernel: kernel sizes differ (" + std::to_string(kx.size) + " vs " +
                    std::to_string(ky.size) + ")");
  const double c = cos_deg(alpha_deg);
  const double s = sin_deg(alpha_deg);
  Kernel2D k;
  k.size = kx.size;
  k.kind = KernelKind::Rotated;
  double a = std::fmod(alpha_deg, 360.0);
  if (a < 0) a += 360.0;
  k.angle_deg = a;
  k.weights.resize(kx.weights.size());
  for (size_t i = 0; i < k.weights.size(); ++i)
    k.weights[i] = kx.weights[i] * c + ky.weights[i] * s;
  return k;
}

/// Ordered set of mutually rotated FT1 kernels; immutable after construction.
class KernelBank {
 public:
  static KernelBank build(int d, int n_angles) {
    require_kernel_size(d, "build_bank");
    if (n_angles < 1) throw SizeError("build_bank: need at least one angle");
    KernelBank bank;
    bank.angle_step_deg_ = 360.0 / n_angles;
    const Kernel2D kx = ft1_kernel(d);
    const Kernel2D ky = kx.transposed();
    bank.kernels_.reserve(static_cast<size_t>(n_angles));
    for (int i = 0; i < n_angles; ++i) {
      Kernel2D k = rotate_kernel(kx, ky, 360.0 * i / n_angles);
      if (i == 0) k.kind = KernelKind::FT1;
      bank.kernels_.push_back(std::move(k));
    }
    return bank;
  }

  static KernelBank from_kernels(std::vector<Kernel2D> kernels, double angle_step_deg) {
    if (kernels.empty()) throw SizeError("KernelBank: empty kernel list");
    for (const Kernel2D& k : kernels)
      if (k.size != kernels.front().size)
        throw SizeError("KernelBank: kernels of mixed size");
    KernelBank bank;
    bank.kernels_ = std::move(kernels);
    bank.angle_step_deg_ = angle_step_deg;
    return bank;
  }

  const std::vector<Kernel2D>& kernels() const { return kernels_; }
  const Kernel2D& kernel(int i) const { return kernels_.at(static_cast<size_t>(i)); }
  int count() const { return static_cast<int>(kernels_.size()); }
  int kernel_size() const { return kernels_.front().size; }
  double angle_step_deg() const { return angle_step_deg_; }

 private:
  KernelBank() = default;
  std::vector<Kernel2D> kernels_;
  double angle_step_deg_ = 0.0;
};

inline KernelBank build_bank(int d = 5, int n_angles = 12) { return KernelBank::build(d, n_angles); }

}  // namespace ftattack
