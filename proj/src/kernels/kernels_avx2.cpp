// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "skillprobe/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>

namespace skillprobe::kernels {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  __m256d acc2 = _mm256_setzero_pd();
  __m256d acc3 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
    acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

// Four output columns per pass so each load of A feeds four FMAs.
void matmul_nt_avx2(const double* a, const double* b, double* c,
                    std::size_t rows, std::size_t cols, std::size_t k) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * cols;
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      __m256d s0 = _mm256_setzero_pd();
      __m256d s1 = _mm256_setzero_pd();
      __m256d s2 = _mm256_setzero_pd();
      __m256d s3 = _mm256_setzero_pd();
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        const __m256d va = _mm256_loadu_pd(ai + p);
        s0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b0 + p), s0);
        s1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b1 + p), s1);
        s2 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b2 + p), s2);
        s3 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b3 + p), s3);
      }
      double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
      for (; p < k; ++p) {
        r0 += ai[p] * b0[p];
        r1 += ai[p] * b1[p];
        r2 += ai[p] * b2[p];
        r3 += ai[p] * b3[p];
      }
      ci[j] = r0;
      ci[j + 1] = r1;
      ci[j + 2] = r2;
      ci[j + 3] = r3;
    }
    for (; j < cols; ++j) ci[j] = dot_avx2(ai, b + j * k, k);
  }
}

void matmul_nn_acc_avx2(const double* g, const double* b, double* c,
                        std::size_t rows, std::size_t cols, std::size_t k) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* gi = g + i * cols;
    double* ci = c + i * k;
    std::size_t j = 0;
    for (; j + 4 <= cols; j += 4) {
      const __m256d g0 = _mm256_set1_pd(gi[j]);
      const __m256d g1 = _mm256_set1_pd(gi[j + 1]);
      const __m256d g2 = _mm256_set1_pd(gi[j + 2]);
      const __m256d g3 = _mm256_set1_pd(gi[j + 3]);
      const double* b0 = b + j * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        __m256d acc = _mm256_loadu_pd(ci + p);
        acc = _mm256_fmadd_pd(g0, _mm256_loadu_pd(b0 + p), acc);
        acc = _mm256_fmadd_pd(g1, _mm256_loadu_pd(b1 + p), acc);
        acc = _mm256_fmadd_pd(g2, _mm256_loadu_pd(b2 + p), acc);
        acc = _mm256_fmadd_pd(g3, _mm256_loadu_pd(b3 + p), acc);
        _mm256_storeu_pd(ci + p, acc);
      }
      for (; p < k; ++p) {
        ci[p] += gi[j] * b0[p] + gi[j + 1] * b1[p] + gi[j + 2] * b2[p] + gi[j + 3] * b3[p];
      }
    }
    for (; j < cols; ++j) axpy_avx2(gi[j], b + j * k, ci, k);
  }
}

void matmul_tn_acc_avx2(const double* g, const double* a, double* w,
                        std::size_t rows, std::size_t cols, std::size_t k) {
  for (std::size_t j = 0; j < cols; ++j) {
    double* wj = w + j * k;
    std::size_t i = 0;
    for (; i + 4 <= rows; i += 4) {
      const double c0 = g[i * cols + j];
      const double c1 = g[(i + 1) * cols + j];
      const double c2 = g[(i + 2) * cols + j];
      const double c3 = g[(i + 3) * cols + j];
      const __m256d g0 = _mm256_set1_pd(c0);
      const __m256d g1 = _mm256_set1_pd(c1);
      const __m256d g2 = _mm256_set1_pd(c2);
      const __m256d g3 = _mm256_set1_pd(c3);
      const double* a0 = a + i * k;
      const double* a1 = a0 + k;
      const double* a2 = a1 + k;
      const double* a3 = a2 + k;
      std::size_t p = 0;
      for (; p + 4 <= k; p += 4) {
        __m256d acc = _mm256_loadu_pd(wj + p);
        acc = _mm256_fmadd_pd(g0, _mm256_loadu_pd(a0 + p), acc);
        acc = _mm256_fmadd_pd(g1, _mm256_loadu_pd(a1 + p), acc);
        acc = _mm256_fmadd_pd(g2, _mm256_loadu_pd(a2 + p), acc);
        acc = _mm256_fmadd_pd(g3, _mm256_loadu_pd(a3 + p), acc);
        _mm256_storeu_pd(wj + p, acc);
      }
      for (; p < k; ++p) wj[p] += c0 * a0[p] + c1 * a1[p] + c2 * a2[p] + c3 * a3[p];
    }
    for (; i < rows; ++i) axpy_avx2(g[i * cols + j], a + i * k, wj, k);
  }
}

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

void centered_moments_avx2(const double* x, double mx, const double* yc,
                           std::size_t n, double* sxx, double* sxy) {
  const __m256d vm = _mm256_set1_pd(mx);
  __m256d xx0 = _mm256_setzero_pd(), xx1 = _mm256_setzero_pd();
  __m256d xy0 = _mm256_setzero_pd(), xy1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(x + i), vm);
    const __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(x + i + 4), vm);
    xx0 = _mm256_fmadd_pd(d0, d0, xx0);
    xx1 = _mm256_fmadd_pd(d1, d1, xx1);
    xy0 = _mm256_fmadd_pd(d0, _mm256_loadu_pd(yc + i), xy0);
    xy1 = _mm256_fmadd_pd(d1, _mm256_loadu_pd(yc + i + 4), xy1);
  }
  double rxx = hsum(_mm256_add_pd(xx0, xx1));
  double rxy = hsum(_mm256_add_pd(xy0, xy1));
  for (; i < n; ++i) {
    const double d = x[i] - mx;
    rxx += d * d;
    rxy += d * yc[i];
  }
  *sxx = rxx;
  *sxy = rxy;
}

}  // namespace

namespace detail {

const KernelTable* avx2_table() {
  static const KernelTable table{
      "avx2",          dot_avx2,           axpy_avx2,
      matmul_nt_avx2,  matmul_nn_acc_avx2, matmul_tn_acc_avx2,
      sum_avx2,        centered_moments_avx2,
  };
  return &table;
}

}  // namespace detail
}  // namespace skillprobe::kernels

#else

namespace skillprobe::kernels::detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace skillprobe::kernels::detail

#endif
