#pragma once

#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gsocc {

// Thread count used by the OpenMP kernels. 0 = library default.
void set_num_threads(int n);
int num_threads();

// Sum f(i) for i in [0, n). Work is split into fixed-size blocks; blocks are
// summed left-to-right within themselves and combined in block order, so the
// result does not depend on the thread count or schedule.
template <typename F>
double deterministic_sum(std::int64_t n, F&& f) {
    constexpr std::int64_t kBlock = 4096;
    const std::int64_t nblocks = (n + kBlock - 1) / kBlock;
    std::vector<double> partial(static_cast<std::size_t>(nblocks), 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < nblocks; ++b) {
        const std::int64_t lo = b * kBlock;
        const std::int64_t hi = std::min(n, lo + kBlock);
        double s = 0.0;
        for (std::int64_t i = lo; i < hi; ++i) s += f(i);
        partial[static_cast<std::size_t>(b)] = s;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

}  // namespace gsocc
