#pragma once

#include <filesystem>
#include <functional>
#include <string>

#include "ftattack/rng.hpp"
#include "ftattack/tensor.hpp"
#include "ftattack/trainer.hpp"

namespace ftattack::testutil {

inline Tensor random_tensor(std::vector<int64_t> shape, uint64_t seed, double lo = 0.0,
                            double hi = 1.0) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<real>(rng.uniform(lo, hi));
  return t;
}

/// Central finite differences of scalar_fn with respect to tensor entry i.
inline double finite_diff(Tensor& t, int64_t i, const std::function<double()>& scalar_fn,
                          real eps = real(1e-3)) {
  const real saved = t[i];
  t[i] = saved + eps;
  const double up = scalar_fn();
  t[i] = saved - eps;
  const double down = scalar_fn();
  t[i] = saved;
  return (up - down) / (2.0 * double(eps));
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / (std::abs(a) + std::abs(b) + 1e-8);
}

/// Sampled finite-difference check against an analytic gradient, with the
/// same kink/noise adjudication the production gradcheck uses.
inline GradcheckGroup check_grad(const std::string& name, Tensor& t, const Tensor& analytic,
                                 const std::function<double()>& loss_fn, uint64_t seed,
                                 int samples = 100) {
  Rng rng(seed);
  return ftattack::detail::check_tensor_grad(name, t, analytic, loss_fn, rng,
                                             kGradcheckTolerance, samples);
}

/// Unique scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / ("ftattack_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace ftattack::testutil
