#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "fft.hpp"
#include "types.hpp"

namespace mfjmodl {

/// Value written to CSV in place of an infinite PSNR.
inline constexpr double kPsnrCap = 999.0;

/// Mean SSIM over all window x window positions (uniform weights, population
/// statistics). C1 = (k1 L)^2, C2 = (k2 L)^2.
inline double ssim(const RMatrix& test, const RMatrix& reference, int window = 8, double k1 = 0.01, double k2 = 0.03,
                   double dynamic_range = 255.0) {
    require_shape(test.rows() == reference.rows() && test.cols() == reference.cols(), "ssim: shape mismatch");
    require(window >= 1, "ssim: window must be positive");
    require(dynamic_range > 0.0, "ssim: dynamic range must be positive");
    require(test.rows() >= window && test.cols() >= window, "ssim: image smaller than window");
    const double c1 = (k1 * dynamic_range) * (k1 * dynamic_range);
    const double c2 = (k2 * dynamic_range) * (k2 * dynamic_range);
    const double n = static_cast<double>(window) * window;
    double total = 0.0;
    long count = 0;
    for (Eigen::Index r = 0; r + window <= test.rows(); ++r)
        for (Eigen::Index c = 0; c + window <= test.cols(); ++c) {
            const auto a = test.block(r, c, window, window);
            const auto b = reference.block(r, c, window, window);
            const double ma = a.sum() / n;
            const double mb = b.sum() / n;
            double va = 0.0, vb = 0.0, cov = 0.0;
            for (Eigen::Index i = 0; i < window; ++i)
                for (Eigen::Index j = 0; j < window; ++j) {
                    const double da = a(i, j) - ma;
                    const double db = b(i, j) - mb;
                    va += da * da;
                    vb += db * db;
                    cov += da * db;
                }
            va /= n;
            vb /= n;
            cov /= n;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    return total / static_cast<double>(count);
}

inline double mean_squared_error(const RMatrix& test, const RMatrix& reference) {
    require_shape(test.rows() == reference.rows() && test.cols() == reference.cols(), "mse: shape mismatch");
    require(test.size() > 0, "mse: empty image");
    return (test - reference).squaredNorm() / static_cast<double>(test.size());
}

/// 10 log10(peak^2 / MSE); +infinity when the images are identical.
inline double psnr(const RMatrix& test, const RMatrix& reference, double peak = 255.0) {
    require(peak > 0.0, "psnr: peak must be positive");
    const double mse = mean_squared_error(test, reference);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(peak * peak / mse);
}

inline double psnr_for_report(double value) { return std::isfinite(value) ? value : kPsnrCap; }

/// Magnitudes of both images scaled by 255 / max|reference|.
inline std::pair<RMatrix, RMatrix> magnitude_pair(const CMatrix& test, const CMatrix& reference) {
    require_shape(test.rows() == reference.rows() && test.cols() == reference.cols(), "magnitude_pair: shape mismatch");
    RMatrix a = test.cwiseAbs();
    RMatrix b = reference.cwiseAbs();
    const double peak = b.maxCoeff();
    const double scale = peak > 0.0 ? 255.0 / peak : 1.0;
    return {a * scale, b * scale};
}

inline double complex_psnr(const CMatrix& test, const CMatrix& reference) {
    const auto [a, b] = magnitude_pair(test, reference);
    return psnr(a, b, 255.0);
}

inline double complex_ssim(const CMatrix& test, const CMatrix& reference, int window = 8) {
    const auto [a, b] = magnitude_pair(test, reference);
    return ssim(a, b, window);
}

struct PslrResult {
    double pslr_db = 0.0;
    double peak_position = 0.0;  // in samples of the cut
};

/// Peak sidelobe ratio of a 1-D complex cut. The cut is band-limited
/// interpolated by zero-padding its spectrum `upsample` times; the mainlobe
/// extends from the peak to the nearest local minimum on each side.
inline PslrResult pslr(const std::vector<cdouble>& cut, int upsample = 16) {
    require(cut.size() >= 4, "pslr: cut too short");
    require(upsample >= 1, "pslr: upsample factor must be positive");
    const auto n = static_cast<Eigen::Index>(cut.size());
    CMatrix spec(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) spec(i, 0) = cut[static_cast<std::size_t>(i)];
    fft::cols(spec, fft::Direction::Forward);
    const Eigen::Index big_n = n * upsample;
    CMatrix big = CMatrix::Zero(big_n, 1);
    const Eigen::Index half = n / 2;
    for (Eigen::Index i = 0; i < half; ++i) big(i, 0) = spec(i, 0);
    for (Eigen::Index i = half; i < n; ++i) big(big_n - n + i, 0) = spec(i, 0);
    fft::cols(big, fft::Direction::Inverse);
    std::vector<double> a(static_cast<std::size_t>(big_n));
    for (Eigen::Index i = 0; i < big_n; ++i) a[static_cast<std::size_t>(i)] = std::abs(big(i, 0));
    const auto pk = static_cast<std::size_t>(std::max_element(a.begin(), a.end()) - a.begin());
    std::size_t lo = pk, hi = pk;
    while (lo > 0 && a[lo - 1] < a[lo]) --lo;
    while (hi + 1 < a.size() && a[hi + 1] < a[hi]) ++hi;
    double side = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (i < lo || i > hi) side = std::max(side, a[i]);
    require(a[pk] > 0.0, "pslr: zero signal");
    PslrResult r;
    r.pslr_db = side > 0.0 ? 20.0 * std::log10(side / a[pk]) : -std::numeric_limits<double>::infinity();
    r.peak_position = static_cast<double>(pk) / upsample;
    return r;
}

}  // namespace mfjmodl
