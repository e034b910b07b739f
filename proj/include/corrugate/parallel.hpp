#pragma once

#include <algorithm>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace corrugate {

// Thread count: min(hardware, CORRUGATE_THREADS). Reductions below are
// fixed-block deterministic, so the thread count never changes results.
inline int thread_count() {
    static int cached = [] {
        int hw = static_cast<int>(std::thread::hardware_concurrency());
        if (hw <= 0) hw = 1;
        if (const char* env = std::getenv("CORRUGATE_THREADS")) {
            int req = std::atoi(env);
            if (req > 0) hw = std::min(hw, req);
        }
        return hw;
    }();
    return cached;
}

// Parallel loop over [0, count). body(i) must be independent per index.
template <class F>
void parallel_for(std::size_t count, F&& body) {
    int nt = thread_count();
    if (nt <= 1 || count < 4096) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt - 1);
    std::size_t chunk = (count + nt - 1) / nt;
    auto work = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) body(i);
    };
    for (int t = 1; t < nt; ++t) {
        std::size_t lo = std::min(count, chunk * static_cast<std::size_t>(t));
        std::size_t hi = std::min(count, lo + chunk);
        if (lo < hi) pool.emplace_back(work, lo, hi);
    }
    work(0, std::min(count, chunk));
    for (auto& th : pool) th.join();
}

// Deterministic max reduction: per-thread partial maxima combine exactly.
template <class F>
double parallel_max(std::size_t count, F&& value) {
    int nt = thread_count();
    if (nt <= 1 || count < 4096) {
        double m = 0.0;
        for (std::size_t i = 0; i < count; ++i) m = std::max(m, value(i));
        return m;
    }
    std::vector<double> partial(nt, 0.0);
    std::vector<std::thread> pool;
    std::size_t chunk = (count + nt - 1) / nt;
    auto work = [&](int t) {
        std::size_t lo = std::min(count, chunk * static_cast<std::size_t>(t));
        std::size_t hi = std::min(count, lo + chunk);
        double m = 0.0;
        for (std::size_t i = lo; i < hi; ++i) m = std::max(m, value(i));
        partial[t] = m;
    };
    for (int t = 1; t < nt; ++t) pool.emplace_back(work, t);
    work(0);
    for (auto& th : pool) th.join();
    double m = 0.0;
    for (double p : partial) m = std::max(m, p);
    return m;
}

// Deterministic sum: fixed 8192-element blocks summed with Kahan compensation,
// block results folded in index order regardless of threading.
template <class F>
double deterministic_sum(std::size_t count, F&& value) {
    constexpr std::size_t block = 8192;
    std::size_t nblocks = (count + block - 1) / block;
    std::vector<double> sums(nblocks, 0.0);
    parallel_for(nblocks, [&](std::size_t b) {
        std::size_t lo = b * block, hi = std::min(count, lo + block);
        double s = 0.0, comp = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            double y = value(i) - comp;
            double t = s + y;
            comp = (t - s) - y;
            s = t;
        }
        sums[b] = s;
    });
    double s = 0.0, comp = 0.0;
    for (double v : sums) {
        double y = v - comp;
        double t = s + y;
        comp = (t - s) - y;
        s = t;
    }
    return s;
}

} // namespace corrugate
