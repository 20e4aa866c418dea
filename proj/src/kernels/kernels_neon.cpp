// NEON is baseline on aarch64, so no runtime probe is needed there.
#include "skillprobe/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>

namespace skillprobe::kernels {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void matmul_nt_neon(const double* a, const double* b, double* c,
                    std::size_t rows, std::size_t cols, std::size_t k) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      c[i * cols + j] = dot_neon(a + i * k, b + j * k, k);
    }
  }
}

void matmul_nn_acc_neon(const double* g, const double* b, double* c,
                        std::size_t rows, std::size_t cols, std::size_t k) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      axpy_neon(g[i * cols + j], b + j * k, c + i * k, k);
    }
  }
}

void matmul_tn_acc_neon(const double* g, const double* a, double* w,
                        std::size_t rows, std::size_t cols, std::size_t k) {
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) {
      axpy_neon(g[i * cols + j], a + i * k, w + j * k, k);
    }
  }
}

double sum_neon(const double* x, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
  double r = vaddvq_f64(acc);
  for (; i < n; ++i) r += x[i];
  return r;
}

void centered_moments_neon(const double* x, double mx, const double* yc,
                           std::size_t n, double* sxx, double* sxy) {
  const float64x2_t vm = vdupq_n_f64(mx);
  float64x2_t xx = vdupq_n_f64(0.0);
  float64x2_t xy = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t d = vsubq_f64(vld1q_f64(x + i), vm);
    xx = vfmaq_f64(xx, d, d);
    xy = vfmaq_f64(xy, d, vld1q_f64(yc + i));
  }
  double rxx = vaddvq_f64(xx);
  double rxy = vaddvq_f64(xy);
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

const KernelTable* neon_table() {
  static const KernelTable table{
      "neon",          dot_neon,           axpy_neon,
      matmul_nt_neon,  matmul_nn_acc_neon, matmul_tn_acc_neon,
      sum_neon,        centered_moments_neon,
  };
  return &table;
}

}  // namespace detail
}  // namespace skillprobe::kernels

#else

namespace skillprobe::kernels::detail {
const KernelTable* neon_table() { return nullptr; }
}  // namespace skillprobe::kernels::detail

#endif
