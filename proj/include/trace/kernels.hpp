#ifndef TRACE_KERNELS_HPP
#define TRACE_KERNELS_HPP

#include <cstddef>

namespace trace::kernels {

// Dense kernels behind the graph ops. Each has a serial reference and an
// OpenMP variant parallelized over output rows; every output element is
// produced by exactly one thread with the same inner summation order, so the
// two variants are bit-identical and results do not depend on thread count.
// The un-suffixed entry points dispatch on problem size.

// c(m x n) = a(m x k) * b(k x n); accumulate adds into c instead of overwriting.
void matmul_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n, bool accumulate = false);
void matmul_parallel(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                     std::size_t n, bool accumulate = false);
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n, bool accumulate = false);

// c(m x n) = a^T * b where a is k x m, b is k x n.
void matmul_at_b_serial(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
                        std::size_t n, bool accumulate = false);
void matmul_at_b_parallel(const double* a, const double* b, double* c, std::size_t k,
                          std::size_t m, std::size_t n, bool accumulate = false);
void matmul_at_b(const double* a, const double* b, double* c, std::size_t k, std::size_t m,
                 std::size_t n, bool accumulate = false);

// c(m x n) = a * b^T where a is m x k, b is n x k.
void matmul_a_bt_serial(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                        std::size_t n, bool accumulate = false);
void matmul_a_bt_parallel(const double* a, const double* b, double* c, std::size_t m,
                          std::size_t k, std::size_t n, bool accumulate = false);
void matmul_a_bt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n, bool accumulate = false);

// y = x * Phi(x), exact erf form.
void gelu_serial(const double* x, double* y, std::size_t n);
void gelu_parallel(const double* x, double* y, std::size_t n);
void gelu(const double* x, double* y, std::size_t n);

// dx += dy * (Phi(x) + x * phi(x)).
void gelu_grad_serial(const double* x, const double* dy, double* dx, std::size_t n);
void gelu_grad_parallel(const double* x, const double* dy, double* dx, std::size_t n);
void gelu_grad(const double* x, const double* dy, double* dx, std::size_t n);

bool openmp_enabled();
int max_threads();

}  // namespace trace::kernels

#endif
