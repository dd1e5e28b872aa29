// SPDX-License-Identifier: Apache-2.0
#include "vls/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace vls::kern {

namespace {
// Below this many output elements the parallel-for is skipped; toy shapes
// dominate this workload and thread startup would swamp them.
constexpr std::int64_t kMinParallelWork = 16 * 1024;
} // namespace

void gemm_nn(const real* a, const real* b, real* c,
             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate) {
#pragma omp parallel for schedule(static) if (m * n >= kMinParallelWork)
    for (std::int64_t i = 0; i < m; ++i) {
        const real* ai = a + i * k;
        real* ci = c + i * n;
        if (!accumulate) std::fill(ci, ci + n, real(0));
        for (std::int64_t p = 0; p < k; ++p) {
            const real aip = ai[p];
            const real* bp = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) {
                ci[j] += aip * bp[j];
            }
        }
    }
}

void gemm_nt(const real* a, const real* b, real* c,
             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate) {
#pragma omp parallel for schedule(static) if (m * n >= kMinParallelWork)
    for (std::int64_t i = 0; i < m; ++i) {
        const real* ai = a + i * k;
        real* ci = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const real* bj = b + j * k;
            real acc = 0;
            for (std::int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] = accumulate ? ci[j] + acc : acc;
        }
    }
}

void gemm_tn(const real* a, const real* b, real* c,
             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate) {
    // a is [K x M]; output rows are columns of a, each owned by one thread.
#pragma omp parallel for schedule(static) if (m * n >= kMinParallelWork)
    for (std::int64_t i = 0; i < m; ++i) {
        real* ci = c + i * n;
        if (!accumulate) std::fill(ci, ci + n, real(0));
        for (std::int64_t p = 0; p < k; ++p) {
            const real aip = a[p * m + i];
            const real* bp = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) {
                ci[j] += aip * bp[j];
            }
        }
    }
}

void softmax_rows(const real* x, real* y, std::int64_t rows, std::int64_t cols) {
#pragma omp parallel for schedule(static) if (rows * cols >= kMinParallelWork)
    for (std::int64_t i = 0; i < rows; ++i) {
        const real* xi = x + i * cols;
        real* yi = y + i * cols;
        real mx = xi[0];
        for (std::int64_t j = 1; j < cols; ++j) mx = std::max(mx, xi[j]);
        real sum = 0;
        for (std::int64_t j = 0; j < cols; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            sum += yi[j];
        }
        const real inv = real(1) / sum;
        for (std::int64_t j = 0; j < cols; ++j) yi[j] *= inv;
    }
}

namespace ref {

void gemm_nn(const real* a, const real* b, real* c,
             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate) {
    for (std::int64_t i = 0; i < m; ++i) {
        const real* ai = a + i * k;
        real* ci = c + i * n;
        if (!accumulate) std::fill(ci, ci + n, real(0));
        for (std::int64_t p = 0; p < k; ++p) {
            const real aip = ai[p];
            const real* bp = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) {
                ci[j] += aip * bp[j];
            }
        }
    }
}

void gemm_nt(const real* a, const real* b, real* c,
             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate) {
    for (std::int64_t i = 0; i < m; ++i) {
        const real* ai = a + i * k;
        real* ci = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const real* bj = b + j * k;
            real acc = 0;
            for (std::int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] = accumulate ? ci[j] + acc : acc;
        }
    }
}

void gemm_tn(const real* a, const real* b, real* c,
             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate) {
    for (std::int64_t i = 0; i < m; ++i) {
        real* ci = c + i * n;
        if (!accumulate) std::fill(ci, ci + n, real(0));
        for (std::int64_t p = 0; p < k; ++p) {
            const real aip = a[p * m + i];
            const real* bp = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) {
                ci[j] += aip * bp[j];
            }
        }
    }
}

void softmax_rows(const real* x, real* y, std::int64_t rows, std::int64_t cols) {
    for (std::int64_t i = 0; i < rows; ++i) {
        const real* xi = x + i * cols;
        real* yi = y + i * cols;
        real mx = xi[0];
        for (std::int64_t j = 1; j < cols; ++j) mx = std::max(mx, xi[j]);
        real sum = 0;
        for (std::int64_t j = 0; j < cols; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            sum += yi[j];
        }
        const real inv = real(1) / sum;
        for (std::int64_t j = 0; j < cols; ++j) yi[j] *= inv;
    }
}

} // namespace ref

} // namespace vls::kern
