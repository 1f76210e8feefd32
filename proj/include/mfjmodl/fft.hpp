#pragma once

// Row/column FFTs over complex rasters, backed by FFTW. Plans are created once
// per (length, direction) under a lock; execution copies through an
// fftw_malloc buffer so alignment, and therefore the chosen codelets, never
// depend on the caller's memory.

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <utility>

#include "types.hpp"

namespace mfjmodl::fft {

enum class Direction { Forward, Inverse };

namespace detail {

struct Buffer {
    fftw_complex* ptr = nullptr;
    explicit Buffer(std::size_t n) : ptr(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n))) {
        if (!ptr) throw std::bad_alloc();
    }
    ~Buffer() { fftw_free(ptr); }
    Buffer(const Buffer&) = delete;
    Buffer& operator=(const Buffer&) = delete;
};

class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(int n, Direction dir) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto key = std::make_pair(n, dir == Direction::Forward);
        auto it = plans_.find(key);
        if (it != plans_.end()) return it->second;
        Buffer in(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
        fftw_plan plan = fftw_plan_dft_1d(n, in.ptr, out.ptr, dir == Direction::Forward ? FFTW_FORWARD : FFTW_BACKWARD,
                                          FFTW_ESTIMATE);
        plans_.emplace(key, plan);
        return plan;
    }

    ~PlanCache() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

private:
    PlanCache() = default;
    std::mutex mutex_;
    std::map<std::pair<int, bool>, fftw_plan> plans_;
};

}  // namespace detail

/// In-place 1-D transform of `n` elements spaced by `stride`. The inverse
/// includes the 1/n factor so that Inverse(Forward(x)) == x.
inline void transform_strided(cdouble* data, int n, Eigen::Index stride, Direction dir) {
    fftw_plan plan = detail::PlanCache::instance().get(n, dir);
    detail::Buffer in(static_cast<std::size_t>(n)), out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        in.ptr[i][0] = data[i * stride].real();
        in.ptr[i][1] = data[i * stride].imag();
    }
    fftw_execute_dft(plan, in.ptr, out.ptr);
    const double scale = dir == Direction::Inverse ? 1.0 / n : 1.0;
    for (int i = 0; i < n; ++i) data[i * stride] = cdouble(out.ptr[i][0] * scale, out.ptr[i][1] * scale);
}

/// Transform every row (along range).
inline void rows(CMatrix& m, Direction dir) {
    const int n = static_cast<int>(m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) transform_strided(m.data() + r * m.cols(), n, 1, dir);
}

/// Transform every column (along azimuth).
inline void cols(CMatrix& m, Direction dir) {
    const int n = static_cast<int>(m.rows());
    for (Eigen::Index c = 0; c < m.cols(); ++c) transform_strided(m.data() + c, n, m.cols(), dir);
}

inline void fft2(CMatrix& m, Direction dir) {
    rows(m, dir);
    cols(m, dir);
}

/// Signed frequency of DFT bin k for an n-point transform sampled at `rate`:
/// bins at or above the half-rate map to negative frequencies.
inline double baseband_frequency(std::size_t k, std::size_t n, double rate) {
    const double f = static_cast<double>(k) * rate / static_cast<double>(n);
    return 2 * k >= n ? f - rate : f;
}

}  // namespace mfjmodl::fft
