#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

// Dense double-precision inner loops. Every variant must agree with the
// scalar reference up to floating-point reassociation; tests/test_kernels.cpp
// checks each table that the host CPU can run.
namespace skillprobe::kernels {

struct KernelTable {
  std::string_view name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[rows x cols] = A[rows x k] * B[cols x k]^T
  void (*matmul_nt)(const double* a, const double* b, double* c,
                    std::size_t rows, std::size_t cols, std::size_t k);
  // C[rows x k] += G[rows x cols] * B[cols x k]
  void (*matmul_nn_acc)(const double* g, const double* b, double* c,
                        std::size_t rows, std::size_t cols, std::size_t k);
  // W[cols x k] += G[rows x cols]^T * A[rows x k]
  void (*matmul_tn_acc)(const double* g, const double* a, double* w,
                        std::size_t rows, std::size_t cols, std::size_t k);
  double (*sum)(const double* x, std::size_t n);
  // sxx = sum (x - mx)^2, sxy = sum (x - mx) * yc, with yc already centered.
  void (*centered_moments)(const double* x, double mx, const double* yc,
                           std::size_t n, double* sxx, double* sxy);
};

const KernelTable& scalar_table();

// Tables compiled in and runnable on this CPU, scalar first.
std::vector<const KernelTable*> available_tables();

// Widest runnable table, unless SKILLPROBE_KERNELS=scalar|avx2|neon picks one.
const KernelTable& active();

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline double sum(std::span<const double> x) {
  return active().sum(x.data(), x.size());
}

namespace detail {
const KernelTable* avx2_table();  // nullptr when not compiled in
const KernelTable* neon_table();
bool cpu_has_avx2_fma();
}  // namespace detail

}  // namespace skillprobe::kernels
