#pragma once

// Stripmap geometry, exact point-target echo simulation and the explicit
// measurement matrix used as a small-instance oracle.

#include <cstdint>
#include <random>

#include "fft.hpp"
#include "types.hpp"

namespace mfjmodl {

struct PointTarget {
    double x = 0.0;   // azimuth position, m
    double r0 = 1.0;  // closest slant range, m
    cdouble amplitude{1.0, 0.0};
};

inline double slant_range(const SarParams& p, double eta, double x, double r0) {
    require(std::isfinite(eta) && std::isfinite(x) && std::isfinite(r0), "slant_range: non-finite input");
    require(r0 > 0.0, "slant_range: r0 must be positive");
    const double along = x - p.platform_velocity * eta;
    return std::sqrt(along * along + r0 * r0);
}

namespace detail {

inline void check_fast_time_grid(const SarParams& p, const std::vector<double>& fast) {
    require(!fast.empty(), "fast-time grid is empty");
    const double dt = 1.0 / p.range_sampling_rate;
    for (std::size_t k = 1; k < fast.size(); ++k)
        require(std::abs((fast[k] - fast[k - 1]) - dt) <= 1e-6 * dt,
                "fast-time grid must be uniform at the range sampling interval");
}

// Rectangular envelopes on the half-open interval [-width/2, width/2).
inline bool inside(double t, double width) { return t >= -0.5 * width && t < 0.5 * width; }

// Accumulates amplitude * h[tau, eta, target] into `out` (pulses x samples).
inline void accumulate_point_echo(const SarParams& p, const PointTarget& t, const std::vector<double>& eta,
                                  const std::vector<double>& fast, CMatrix& out) {
    const double c = kSpeedOfLight;
    const double beam_center = t.x / p.platform_velocity;
    const double aperture = p.synthetic_aperture_time(t.r0);
    const double dt = 1.0 / p.range_sampling_rate;
    const double half_pulse = 0.5 * p.pulse_duration;
    const std::size_t nr = fast.size();
    for (std::size_t m = 0; m < eta.size(); ++m) {
        if (!inside(eta[m] - beam_center, aperture)) continue;
        const double r = slant_range(p, eta[m], t.x, t.r0);
        const double delay = 2.0 * r / c;
        const cdouble carrier = t.amplitude * std::polar(1.0, -4.0 * kPi * p.carrier_frequency * r / c);
        // Only samples inside the range envelope contribute.
        const double first = std::ceil((delay - half_pulse - fast.front()) / dt) - 1.0;
        const double last = std::floor((delay + half_pulse - fast.front()) / dt) + 1.0;
        const std::size_t k0 = first < 0.0 ? 0 : static_cast<std::size_t>(first);
        const std::size_t k1 = last < 0.0 ? 0 : std::min(nr, static_cast<std::size_t>(last) + 1);
        for (std::size_t k = k0; k < k1; ++k) {
            const double u = fast[k] - delay;
            if (!inside(u, p.pulse_duration)) continue;
            out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) +=
                carrier * std::polar(1.0, kPi * p.range_chirp_rate * u * u);
        }
    }
}

inline void check_times(const std::vector<double>& eta) {
    require(!eta.empty(), "azimuth time list is empty");
    for (std::size_t i = 1; i < eta.size(); ++i)
        require(eta[i] > eta[i - 1], "azimuth times must be strictly increasing");
}

}  // namespace detail

/// Exact echo of one scatterer: LFM range chirp, carrier phase and
/// rectangular range/azimuth envelopes, broadside beam.
inline EchoMatrix point_target_echo(const SarParams& p, const PointTarget& target,
                                    const std::vector<double>& azimuth_times,
                                    const std::vector<double>& fast_time_grid) {
    require(target.r0 > 0.0, "point_target_echo: r0 must be positive");
    detail::check_times(azimuth_times);
    detail::check_fast_time_grid(p, fast_time_grid);
    CMatrix out = CMatrix::Zero(static_cast<Eigen::Index>(azimuth_times.size()),
                                static_cast<Eigen::Index>(fast_time_grid.size()));
    detail::accumulate_point_echo(p, target, azimuth_times, fast_time_grid, out);
    return EchoMatrix(std::move(out), azimuth_times, fast_time_grid.front());
}

/// Scatterer located at scene cell (ka, kr); range columns align with the
/// fast-time grid and azimuth rows with slow time k/prf.
inline PointTarget cell_target(const SarParams& p, Eigen::Index ka, Eigen::Index kr,
                               const std::vector<double>& fast_time_grid, cdouble amplitude = {1.0, 0.0}) {
    PointTarget t;
    t.x = static_cast<double>(ka) * p.azimuth_spacing();
    t.r0 = 0.5 * kSpeedOfLight * fast_time_grid.at(static_cast<std::size_t>(kr));
    t.amplitude = amplitude;
    return t;
}

/// Adds circular complex white Gaussian noise of total standard deviation sigma.
inline void add_complex_noise(CMatrix& m, double sigma, std::uint64_t seed) {
    if (sigma <= 0.0) return;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sigma / std::sqrt(2.0));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const double re = normal(rng);
        const double im = normal(rng);
        m.data()[i] += cdouble(re, im);
    }
}

inline EchoMatrix scene_echo(const SarParams& p, const ReflectivityMap& scene, const std::vector<double>& azimuth_times,
                             const std::vector<double>& fast_time_grid, double noise_sigma,
                             std::uint64_t seed = 0) {
    scene.validate();
    detail::check_times(azimuth_times);
    detail::check_fast_time_grid(p, fast_time_grid);
    require(noise_sigma >= 0.0, "scene_echo: noise sigma must be non-negative");
    require_shape(static_cast<std::size_t>(scene.cols()) == fast_time_grid.size(),
                  "scene_echo: scene range cells differ from fast-time grid length");
    require_shape(std::abs(scene.range_spacing / p.range_spacing() - 1.0) <= 1e-9 &&
                      std::abs(scene.azimuth_spacing / p.azimuth_spacing() - 1.0) <= 1e-9,
                  "scene_echo: scene spacing inconsistent with radar resolution grid");
    CMatrix out = CMatrix::Zero(static_cast<Eigen::Index>(azimuth_times.size()),
                                static_cast<Eigen::Index>(fast_time_grid.size()));
    for (Eigen::Index ka = 0; ka < scene.rows(); ++ka)
        for (Eigen::Index kr = 0; kr < scene.cols(); ++kr) {
            const cdouble a = scene.data(ka, kr);
            if (a == cdouble(0.0, 0.0)) continue;
            detail::accumulate_point_echo(p, cell_target(p, ka, kr, fast_time_grid, a), azimuth_times,
                                          fast_time_grid, out);
        }
    add_complex_noise(out, noise_sigma, seed);
    return EchoMatrix(std::move(out), azimuth_times, fast_time_grid.front());
}

/// Column-major vectorization: element (r, c) lands at c * rows + r.
inline Eigen::VectorXcd vectorize(const CMatrix& m) {
    Eigen::VectorXcd v(m.size());
    for (Eigen::Index c = 0; c < m.cols(); ++c)
        for (Eigen::Index r = 0; r < m.rows(); ++r) v(c * m.rows() + r) = m(r, c);
    return v;
}

inline CMatrix unvectorize(const Eigen::VectorXcd& v, Eigen::Index rows, Eigen::Index cols) {
    require_shape(v.size() == rows * cols, "unvectorize: size mismatch");
    CMatrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = v(c * rows + r);
    return m;
}

inline constexpr std::size_t kMeasurementMatrixCap = std::size_t{1} << 22;

/// Explicit H: row nr*M + na holds range sample nr of pulse na, column
/// kr*Ma + ka holds the unit echo of scene cell (ka, kr). Both sides use
/// `vectorize` ordering, so H * vectorize(scene) == vectorize(echo).
inline Eigen::MatrixXcd build_measurement_matrix(const SarParams& p, const std::vector<double>& azimuth_times,
                                                 const std::vector<double>& fast_time_grid,
                                                 Eigen::Index scene_rows, Eigen::Index scene_cols) {
    detail::check_times(azimuth_times);
    detail::check_fast_time_grid(p, fast_time_grid);
    require(scene_rows >= 1 && scene_cols >= 1, "build_measurement_matrix: empty scene");
    require_shape(static_cast<std::size_t>(scene_cols) == fast_time_grid.size(),
                  "build_measurement_matrix: scene range cells differ from fast-time grid length");
    const auto m = static_cast<Eigen::Index>(azimuth_times.size());
    const auto nr = static_cast<Eigen::Index>(fast_time_grid.size());
    const std::size_t entries =
        static_cast<std::size_t>(m * nr) * static_cast<std::size_t>(scene_rows * scene_cols);
    if (entries > kMeasurementMatrixCap) throw InvalidArgument("build_measurement_matrix: size cap exceeded");
    Eigen::MatrixXcd h(m * nr, scene_rows * scene_cols);
    CMatrix column(m, nr);
    for (Eigen::Index kr = 0; kr < scene_cols; ++kr)
        for (Eigen::Index ka = 0; ka < scene_rows; ++ka) {
            column.setZero();
            detail::accumulate_point_echo(p, cell_target(p, ka, kr, fast_time_grid), azimuth_times, fast_time_grid,
                                          column);
            h.col(kr * scene_rows + ka) = vectorize(column);
        }
    return h;
}

/// Echo of an amplitude image: random-phase complex scene convolved (circularly,
/// via 2-D FFT) with the reference point-target echo centered on the grid.
struct ImageEcho {
    EchoMatrix echo;
    ReflectivityMap scene;
};

inline CMatrix circular_convolve(const CMatrix& a, const CMatrix& b) {
    require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "circular_convolve: shape mismatch");
    CMatrix fa = a, fb = b;
    fft::fft2(fa, fft::Direction::Forward);
    fft::fft2(fb, fft::Direction::Forward);
    CMatrix prod = fa.cwiseProduct(fb);
    fft::fft2(prod, fft::Direction::Inverse);
    return prod;
}

/// Reference echo of a unit scatterer at the grid center, rolled so the
/// scatterer sits at cell (0, 0).
inline CMatrix centered_reference_kernel(const SarParams& p, const ImagingGrid& g) {
    const auto na = static_cast<Eigen::Index>(g.azimuth_cells);
    const auto nr = static_cast<Eigen::Index>(g.range_cells);
    const auto fast = g.fast_times();
    const EchoMatrix sp = point_target_echo(p, cell_target(p, na / 2, nr / 2, fast), g.slow_times(), fast);
    CMatrix k(na, nr);
    for (Eigen::Index a = 0; a < na; ++a)
        for (Eigen::Index r = 0; r < nr; ++r) k(a, r) = sp.data((a + na / 2) % na, (r + nr / 2) % nr);
    return k;
}

inline ImageEcho echo_from_image(const SarParams& p, const RMatrix& amplitude, std::uint64_t seed) {
    p.validate();
    require(amplitude.rows() >= 1 && amplitude.cols() >= 1, "echo_from_image: input must be a non-empty 2-D image");
    for (Eigen::Index i = 0; i < amplitude.size(); ++i) {
        const double v = amplitude.data()[i];
        require(std::isfinite(v) && v >= 0.0 && v <= 255.0, "echo_from_image: pixel values must lie in [0, 255]");
    }
    const ImagingGrid g = ImagingGrid::centered(p, static_cast<std::size_t>(amplitude.rows()),
                                                static_cast<std::size_t>(amplitude.cols()));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
    CMatrix slc(amplitude.rows(), amplitude.cols());
    for (Eigen::Index a = 0; a < amplitude.rows(); ++a)
        for (Eigen::Index r = 0; r < amplitude.cols(); ++r) slc(a, r) = std::polar(amplitude(a, r), phase(rng));
    CMatrix echo = circular_convolve(centered_reference_kernel(p, g), slc);
    return ImageEcho{EchoMatrix(std::move(echo), g.slow_times(), g.fast_time_origin),
                     ReflectivityMap(std::move(slc), p.azimuth_spacing(), p.range_spacing())};
}

}  // namespace mfjmodl
