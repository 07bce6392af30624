#pragma once

#include <cblas.h>

#include <concepts>
#include <cstddef>

namespace lipnet::blas {

enum class Trans { no, yes };

namespace detail {

inline void pin_single_thread() {
#ifdef OPENBLAS_VERSION
  static const bool pinned = [] {
    openblas_set_num_threads(1);
    return true;
  }();
  (void)pinned;
#endif
}

inline CBLAS_TRANSPOSE to_cblas(Trans t) { return t == Trans::yes ? CblasTrans : CblasNoTrans; }

}  // namespace detail

// Row-major C = alpha * op(A) * op(B) + beta * C, with op(A) m x k and op(B) k x n.
inline void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, float alpha,
                 const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta,
                 float* c, std::size_t ldc) {
  detail::pin_single_thread();
  cblas_sgemm(CblasRowMajor, detail::to_cblas(ta), detail::to_cblas(tb), static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

inline void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
                 const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
                 double* c, std::size_t ldc) {
  detail::pin_single_thread();
  cblas_dgemm(CblasRowMajor, detail::to_cblas(ta), detail::to_cblas(tb), static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a, static_cast<int>(lda), b,
              static_cast<int>(ldb), beta, c, static_cast<int>(ldc));
}

// Triple-loop kernel with the same contract; used as a test oracle.
template <std::floating_point T>
void gemm_reference(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, T alpha,
                    const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
                    std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t l = 0; l < k; ++l) {
        const T av = ta == Trans::yes ? a[l * lda + i] : a[i * lda + l];
        const T bv = tb == Trans::yes ? b[j * ldb + l] : b[l * ldb + j];
        acc += av * bv;
      }
      c[i * ldc + j] = alpha * acc + (beta == T{0} ? T{0} : beta * c[i * ldc + j]);
    }
  }
}

}  // namespace lipnet::blas
