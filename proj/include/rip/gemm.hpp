#pragma once

#include <cstddef>

namespace rip {

// Dense double-precision kernels. Row-parallel: every output element is
// produced by exactly one thread with a fixed accumulation order, so results
// do not depend on the thread count.

// C[m,n] = A[m,k] * B[k,n]  (overwrites C)
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n);

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n);

// C[m,n] += A[m,k] * B[n,k]^T   (B stored row-major [n,k])
void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n);

// C[k,n] += A[m,k]^T * B[m,n]   (A stored row-major [m,k])
void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n);

// dot(x, y) with a fixed eight-lane accumulation order; vectorizable and
// bit-identical across runs and thread counts
double fixed_dot(const double* x, const double* y, std::size_t n);

}  // namespace rip
