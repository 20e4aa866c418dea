#include "skillprobe/kernels.hpp"

namespace skillprobe::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void matmul_nt_scalar(const double* a, const double* b, double* c,
                      std::size_t rows, std::size_t cols, std::size_t k) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      c[i * cols + j] = dot_scalar(a + i * k, b + j * k, k);
    }
  }
}

void matmul_nn_acc_scalar(const double* g, const double* b, double* c,
                          std::size_t rows, std::size_t cols, std::size_t k) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      axpy_scalar(g[i * cols + j], b + j * k, c + i * k, k);
    }
  }
}

void matmul_tn_acc_scalar(const double* g, const double* a, double* w,
                          std::size_t rows, std::size_t cols, std::size_t k) {
  for (std::size_t j = 0; j < cols; ++j) {
    for (std::size_t i = 0; i < rows; ++i) {
      axpy_scalar(g[i * cols + j], a + i * k, w + j * k, k);
    }
  }
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

void centered_moments_scalar(const double* x, double mx, const double* yc,
                             std::size_t n, double* sxx, double* sxy) {
  double xx = 0.0, xy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    xx += dx * dx;
    xy += dx * yc[i];
  }
  *sxx = xx;
  *sxy = xy;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{
      "scalar",          dot_scalar,           axpy_scalar,
      matmul_nt_scalar,  matmul_nn_acc_scalar, matmul_tn_acc_scalar,
      sum_scalar,        centered_moments_scalar,
  };
  return table;
}

}  // namespace skillprobe::kernels
