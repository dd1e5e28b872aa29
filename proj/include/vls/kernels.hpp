// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "vls/common.hpp"

// Dense row-major kernels. The parallel versions in vls::kern split work so
// that every output element is owned by exactly one thread and reduced in a
// fixed serial order, so results are bitwise identical to the serial
// reference in vls::kern::ref for any thread count. No omp reductions.

namespace vls::kern {

// c[M x N] = a[M x K] * b[K x N], accumulating into c when `accumulate`.
void gemm_nn(const real* a, const real* b, real* c,
             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate);

// c[M x N] = a[M x K] * b^T where b is stored [N x K].
void gemm_nt(const real* a, const real* b, real* c,
             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate);

// c[M x N] = a^T * b where a is stored [K x M], b is [K x N].
void gemm_tn(const real* a, const real* b, real* c,
             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate);

// Row-wise softmax with max subtraction. y may alias x.
void softmax_rows(const real* x, real* y, std::int64_t rows, std::int64_t cols);

namespace ref {

void gemm_nn(const real* a, const real* b, real* c,
             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate);
void gemm_nt(const real* a, const real* b, real* c,
             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate);
void gemm_tn(const real* a, const real* b, real* c,
             std::int64_t m, std::int64_t k, std::int64_t n, bool accumulate);
void softmax_rows(const real* x, real* y, std::int64_t rows, std::int64_t cols);

} // namespace ref

} // namespace vls::kern
