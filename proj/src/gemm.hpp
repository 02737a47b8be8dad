#pragma once

#include <cstdint>

namespace pses::detail {

// c[m,n] += a[m,k] @ b[k,n], all row-major. The j-inner loop is independent
// per element, so the compiler vectorizes it without reassociation.
template <typename S>
void gemm(const S* __restrict a, const S* __restrict b, S* __restrict c,
          int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    S* crow = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const S av = arow[p];
      const S* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,n] += a[m,k] @ b[n,k]^T
template <typename S>
void gemm_nt(const S* __restrict a, const S* __restrict b, S* __restrict c,
             int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    for (int64_t j = 0; j < n; ++j) {
      const S* brow = b + j * k;
      S acc = 0;
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// c[m,n] += a[k,m]^T @ b[k,n]
template <typename S>
void gemm_tn(const S* __restrict a, const S* __restrict b, S* __restrict c,
             int64_t m, int64_t k, int64_t n) {
  for (int64_t p = 0; p < k; ++p) {
    const S* arow = a + p * m;
    const S* brow = b + p * n;
    for (int64_t i = 0; i < m; ++i) {
      const S av = arow[i];
      S* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace pses::detail
