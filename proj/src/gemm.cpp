#include "rip/gemm.hpp"

#include "rip/parallel.hpp"

namespace rip {

namespace {

constexpr std::size_t kParallelCutoff = 16 * 1024;  // flops below this run inline

// All kernels use a fixed accumulation order (independent of thread count and
// identical on every run), chosen so the compiler can keep the inner loops
// vectorized without reassociating anything itself.

inline void rows_nn(const double* a, const double* b, double* c, std::size_t r0, std::size_t r1,
                    std::size_t k, std::size_t n, bool accumulate) {
    std::size_t i = r0;
    for (; i + 2 <= r1; i += 2) {
        double* c0 = c + i * n;
        double* c1 = c0 + n;
        if (!accumulate) {
            for (std::size_t j = 0; j < n; ++j) c0[j] = 0.0;
            for (std::size_t j = 0; j < n; ++j) c1[j] = 0.0;
        }
        const double* a0 = a + i * k;
        const double* a1 = a0 + k;
        std::size_t kk = 0;
        for (; kk + 2 <= k; kk += 2) {
            const double a00 = a0[kk], a01 = a0[kk + 1];
            const double a10 = a1[kk], a11 = a1[kk + 1];
            const double* b0 = b + kk * n;
            const double* b1 = b0 + n;
            for (std::size_t j = 0; j < n; ++j) {
                const double v0 = b0[j], v1 = b1[j];
                c0[j] += a00 * v0 + a01 * v1;
                c1[j] += a10 * v0 + a11 * v1;
            }
        }
        for (; kk < k; ++kk) {
            const double* bk = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) {
                c0[j] += a0[kk] * bk[j];
                c1[j] += a1[kk] * bk[j];
            }
        }
    }
    for (; i < r1; ++i) {
        double* ci = c + i * n;
        if (!accumulate) {
            for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
        }
        const double* ai = a + i * k;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = ai[kk];
            const double* bk = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
}

}  // namespace

// Fixed-order dot product: eight vector lanes accumulated independently, then
// combined pairwise. Vectorizes without -ffast-math and is run-invariant.
double fixed_dot(const double* x, const double* y, std::size_t n) {
    double lane[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (int u = 0; u < 8; ++u) lane[u] += x[i + u] * y[i + u];
    }
    double tail = 0.0;
    for (; i < n; ++i) tail += x[i] * y[i];
    return (((lane[0] + lane[1]) + (lane[2] + lane[3])) +
            ((lane[4] + lane[5]) + (lane[6] + lane[7]))) +
           tail;
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
    if (m * k * n < kParallelCutoff) {
        rows_nn(a, b, c, 0, m, k, n, false);
        return;
    }
    parallel_for(m, [&](std::size_t r0, std::size_t r1) { rows_nn(a, b, c, r0, r1, k, n, false); });
}

void gemm_nn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
    if (m * k * n < kParallelCutoff) {
        rows_nn(a, b, c, 0, m, k, n, true);
        return;
    }
    parallel_for(m, [&](std::size_t r0, std::size_t r1) { rows_nn(a, b, c, r0, r1, k, n, true); });
}

void gemm_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
    auto body = [&](std::size_t r0, std::size_t r1) {
        for (std::size_t i = r0; i < r1; ++i) {
            const double* ai = a + i * k;
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += fixed_dot(ai, b + j * k, k);
        }
    };
    if (m * k * n < kParallelCutoff) {
        body(0, m);
        return;
    }
    parallel_for(m, body);
}

void gemm_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n) {
    auto body = [&](std::size_t c0, std::size_t c1) {
        // each thread owns a contiguous band of C rows (= A columns)
        for (std::size_t i = 0; i < m; ++i) {
            const double* ai = a + i * k;
            const double* bi = b + i * n;
            for (std::size_t kk = c0; kk < c1; ++kk) {
                const double aik = ai[kk];
                if (aik == 0.0) continue;
                double* ck = c + kk * n;
                for (std::size_t j = 0; j < n; ++j) ck[j] += aik * bi[j];
            }
        }
    };
    if (m * k * n < kParallelCutoff) {
        body(0, k);
        return;
    }
    parallel_for(k, body);
}

}  // namespace rip
