#include "trace/kernels.hpp"

#include <cmath>
#include <cstring>

#ifdef TRACE_HAS_OPENMP
#include <omp.h>
#endif

namespace trace::kernels {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244008443621048490;
constexpr double kInvSqrt2Pi = 0.3989422804014326779399460599343819;

// Below this many multiply-adds the OpenMP fork is not worth it.
constexpr std::size_t kParallelMinWork = 1 << 15;

inline double gelu_one(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

inline double gelu_grad_one(double x) {
  double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

inline void matmul_row(const double* a, const double* b, double* c_row, std::size_t i,
                       std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(c_row, 0, n * sizeof(double));
  const double* a_row = a + i * k;
  for (std::size_t l = 0; l < k; ++l) {
    double av = a_row[l];
    const double* b_row = b + l * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

inline void at_b_row(const double* a, const double* b, double* c_row, std::size_t i,
                     std::size_t k, std::size_t m, std::size_t n, bool accumulate) {
  if (!accumulate) std::memset(c_row, 0, n * sizeof(double));
  for (std::size_t l = 0; l < k; ++l) {
    double av = a[l * m + i];
    const double* b_row = b + l * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

inline void a_bt_row(const double* a, const double* b, double* c_row, std::size_t i,
                     std::size_t k, std::size_t n, bool accumulate) {
  const double* a_row = a + i * k;
  for (std::size_t j = 0; j < n; ++j) {
    const double* b_row = b + j * k;
    double s = 0.0;
    for (std::size_t l = 0; l < k; ++l) s += a_row[l] * b_row[l];
    if (accumulate) c_row[j] += s; else c_row[j] = s;
  }
}

inline bool go_parallel(std::size_t work) {
#ifdef TRACE_HAS_OPENMP
  return work >= kParallelMinWork && omp_get_max_threads() > 1;
#else
  (void)work;
  return false;
#endif
}

}  // namespace

void matmul_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) matmul_row(a, b, c + i * n, i, k, n, accumulate);
}

void matmul_parallel(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n, bool accumulate) {
#ifdef TRACE_HAS_OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(m); ++i)
    matmul_row(a, b, c + static_cast<std::size_t>(i) * n, static_cast<std::size_t>(i), k, n,
               accumulate);
#else
  matmul_serial(a, b, c, m, k, n, accumulate);
#endif
}

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate) {
  if (go_parallel(m * k * n)) matmul_parallel(a, b, c, m, k, n, accumulate);
  else matmul_serial(a, b, c, m, k, n, accumulate);
}

void matmul_at_b_serial(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
                        std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) at_b_row(a, b, c + i * n, i, k, m, n, accumulate);
}

void matmul_at_b_parallel(const double* a, const double* b, double* c, std::size_t k,
                          std::size_t m, std::size_t n, bool accumulate) {
#ifdef TRACE_HAS_OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(m); ++i)
    at_b_row(a, b, c + static_cast<std::size_t>(i) * n, static_cast<std::size_t>(i), k, m, n,
             accumulate);
#else
  matmul_at_b_serial(a, b, c, k, m, n, accumulate);
#endif
}

void matmul_at_b(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
                 std::size_t n, bool accumulate) {
  if (go_parallel(m * k * n)) matmul_at_b_parallel(a, b, c, k, m, n, accumulate);
  else matmul_at_b_serial(a, b, c, k, m, n, accumulate);
}

void matmul_a_bt_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                        std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) a_bt_row(a, b, c + i * n, i, k, n, accumulate);
}

void matmul_a_bt_parallel(const double* a, const double* b, double* c, std::size_t m,
                          std::size_t k, std::size_t n, bool accumulate) {
#ifdef TRACE_HAS_OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(m); ++i)
    a_bt_row(a, b, c + static_cast<std::size_t>(i) * n, static_cast<std::size_t>(i), k, n,
             accumulate);
#else
  matmul_a_bt_serial(a, b, c, m, k, n, accumulate);
#endif
}

void matmul_a_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n, bool accumulate) {
  if (go_parallel(m * k * n)) matmul_a_bt_parallel(a, b, c, m, k, n, accumulate);
  else matmul_a_bt_serial(a, b, c, m, k, n, accumulate);
}

void gelu_serial(const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = gelu_one(x[i]);
}

void gelu_parallel(const double* x, double* y, std::size_t n) {
#ifdef TRACE_HAS_OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) y[i] = gelu_one(x[i]);
#else
  gelu_serial(x, y, n);
#endif
}

void gelu(const double* x, double* y, std::size_t n) {
  if (go_parallel(n * 8)) gelu_parallel(x, y, n);
  else gelu_serial(x, y, n);
}

void gelu_grad_serial(const double* x, const double* dy, double* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += dy[i] * gelu_grad_one(x[i]);
}

void gelu_grad_parallel(const double* x, const double* dy, double* dx, std::size_t n) {
#ifdef TRACE_HAS_OPENMP
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i) dx[i] += dy[i] * gelu_grad_one(x[i]);
#else
  gelu_grad_serial(x, dy, dx, n);
#endif
}

void gelu_grad(const double* x, const double* dy, double* dx, std::size_t n) {
  if (go_parallel(n * 8)) gelu_grad_parallel(x, dy, dx, n);
  else gelu_grad_serial(x, dy, dx, n);
}

bool openmp_enabled() {
#ifdef TRACE_HAS_OPENMP
  return true;
#else
  return false;
#endif
}

int max_threads() {
#ifdef TRACE_HAS_OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace trace::kernels
