#pragma once

#include <cblas.h>

#include "ftattack/tensor.hpp"

extern "C" void openblas_set_num_threads(int);

namespace ftattack {

// BLAS runs single-threaded; batching is parallelized one level up with a
// deterministic chunk schedule.
inline void blas_init_once() {
  static const bool done = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)done;
}

/// Row-major C = alpha * op(A) * op(B) + beta * C.
inline void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, real alpha,
                 const real* a, int64_t lda, const real* b, int64_t ldb, real beta, real* c,
                 int64_t ldc) {
  blas_init_once();
  const CBLAS_TRANSPOSE ta = trans_a ? CblasTrans : CblasNoTrans;
  const CBLAS_TRANSPOSE tb = trans_b ? CblasTrans : CblasNoTrans;
  if constexpr (sizeof(real) == sizeof(float)) {
    cblas_sgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), static_cast<float>(alpha),
                reinterpret_cast<const float*>(a), static_cast<int>(lda),
                reinterpret_cast<const float*>(b), static_cast<int>(ldb),
                static_cast<float>(beta), reinterpret_cast<float*>(c), static_cast<int>(ldc));
  } else {
    cblas_dgemm(CblasRowMajor, ta, tb, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), static_cast<double>(alpha),
                reinterpret_cast<const double*>(a), static_cast<int>(lda),
                reinterpret_cast<const double*>(b), static_cast<int>(ldb),
                static_cast<double>(beta), reinterpret_cast<double*>(c), static_cast<int>(ldc));
  }
}

}  // namespace ftattack
