// SPDX-License-Identifier: Apache-2.0
//
// Compares the OpenMP kernels against the serial reference: checks bitwise
// agreement, then reports throughput for both.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "vls/kernels.hpp"
#include "vls/rng.hpp"

using namespace vls;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_per_call(const std::function<void()>& fn, int iters) {
    fn(); // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < iters; ++i) fn();
    const std::chrono::duration<double> dt = Clock::now() - t0;
    return dt.count() / iters;
}

} // namespace

int main() {
#ifdef _OPENMP
    std::printf("openmp threads: %d\n", omp_get_max_threads());
#else
    std::printf("openmp: disabled at build time\n");
#endif

    const std::int64_t sizes[][3] = {{64, 64, 64}, {128, 128, 128}, {256, 256, 256},
                                     {384, 384, 384}};
    for (const auto& s : sizes) {
        const std::int64_t m = s[0], k = s[1], n = s[2];
        SeededRng rng(static_cast<std::uint64_t>(m));
        std::vector<real> a(static_cast<std::size_t>(m * k)), b(static_cast<std::size_t>(k * n));
        for (auto& v : a) v = static_cast<real>(rng.uniform(-1.0, 1.0));
        for (auto& v : b) v = static_cast<real>(rng.uniform(-1.0, 1.0));
        std::vector<real> c_par(static_cast<std::size_t>(m * n)), c_ref = c_par;

        kern::gemm_nn(a.data(), b.data(), c_par.data(), m, k, n, false);
        kern::ref::gemm_nn(a.data(), b.data(), c_ref.data(), m, k, n, false);
        const bool same =
            std::memcmp(c_par.data(), c_ref.data(), c_par.size() * sizeof(real)) == 0;

        const int iters = m <= 128 ? 40 : 10;
        const double t_par = seconds_per_call(
            [&] { kern::gemm_nn(a.data(), b.data(), c_par.data(), m, k, n, false); }, iters);
        const double t_ref = seconds_per_call(
            [&] { kern::ref::gemm_nn(a.data(), b.data(), c_ref.data(), m, k, n, false); }, iters);

        const double flops = 2.0 * static_cast<double>(m) * k * n;
        std::printf(
            "gemm %4lldx%4lldx%4lld  bitwise=%s  serial %8.2f GF/s  parallel %8.2f GF/s  speedup %.2fx\n",
            static_cast<long long>(m), static_cast<long long>(k), static_cast<long long>(n),
            same ? "yes" : "NO", flops / t_ref / 1e9, flops / t_par / 1e9, t_ref / t_par);
        if (!same) return 1;
    }

    // softmax rows
    {
        const std::int64_t rows = 4096, cols = 512;
        SeededRng rng(99);
        std::vector<real> x(static_cast<std::size_t>(rows * cols));
        for (auto& v : x) v = static_cast<real>(rng.uniform(-4.0, 4.0));
        std::vector<real> y_par(x.size()), y_ref(x.size());
        kern::softmax_rows(x.data(), y_par.data(), rows, cols);
        kern::ref::softmax_rows(x.data(), y_ref.data(), rows, cols);
        const bool same = std::memcmp(y_par.data(), y_ref.data(), x.size() * sizeof(real)) == 0;
        const double t_par =
            seconds_per_call([&] { kern::softmax_rows(x.data(), y_par.data(), rows, cols); }, 50);
        const double t_ref = seconds_per_call(
            [&] { kern::ref::softmax_rows(x.data(), y_ref.data(), rows, cols); }, 50);
        std::printf("softmax %lldx%lld      bitwise=%s  serial %8.2f ms     parallel %8.2f ms     speedup %.2fx\n",
                    static_cast<long long>(rows), static_cast<long long>(cols), same ? "yes" : "NO",
                    t_ref * 1e3, t_par * 1e3, t_ref / t_par);
        if (!same) return 1;
    }
    return 0;
}
