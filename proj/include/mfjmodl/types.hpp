#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace mfjmodl {

using cdouble = std::complex<double>;

// Rasters are row-major: rows index azimuth (pulses or Doppler bins), columns
// index range (fast-time samples or range frequencies).
using CMatrix = Eigen::Matrix<cdouble, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPi = 3.14159265358979323846;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class Infeasible : public Error {
public:
    using Error::Error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw InvalidArgument(message);
}

inline void require_shape(bool condition, const std::string& message) {
    if (!condition) throw DimensionMismatch(message);
}

inline bool all_finite(const CMatrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        const cdouble v = m.data()[i];
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    }
    return true;
}

/// Radar and platform constants. Defaults are the X-band airborne system used
/// throughout the toolkit.
struct SarParams {
    double carrier_frequency = 9.6e9;        // Hz
    double wavelength = kSpeedOfLight / 9.6e9;  // m
    double range_bandwidth = 150e6;          // Hz
    double range_sampling_rate = 200e6;      // Hz
    double pulse_duration = 1e-6;            // s
    double range_chirp_rate = 200e12;        // Hz/s
    double doppler_rate = 256.1772;          // Hz/s
    double prf = 200.0;                      // Hz
    double platform_velocity = 200.0;        // m/s
    double platform_height = 10000.0;        // m
    double antenna_length_azimuth = 2.0;     // m

    static SarParams table_defaults() { return SarParams{}; }

    void validate() const {
        const double fields[] = {carrier_frequency, wavelength,        range_bandwidth,
                                 range_sampling_rate, pulse_duration,  range_chirp_rate,
                                 doppler_rate,      prf,               platform_velocity,
                                 platform_height,   antenna_length_azimuth};
        for (double f : fields)
            require(std::isfinite(f) && f > 0.0, "SarParams: physical fields must be finite and positive");
        require(range_sampling_rate >= range_bandwidth,
                "SarParams: range sampling rate below range bandwidth");
        require(std::abs(wavelength * carrier_frequency / kSpeedOfLight - 1.0) <= 1e-6,
                "SarParams: wavelength inconsistent with carrier frequency");
    }

    double pri() const { return 1.0 / prf; }
    double azimuth_spacing() const { return platform_velocity / prf; }
    double range_spacing() const { return kSpeedOfLight / (2.0 * range_sampling_rate); }

    /// Duration a target at closest range r0 stays inside the azimuth beam.
    double synthetic_aperture_time(double r0) const {
        return wavelength * r0 / (antenna_length_azimuth * platform_velocity);
    }
};

/// Maps raster indices to slow time, fast time and scene coordinates. The echo
/// and scene rasters share this grid one-to-one.
struct ImagingGrid {
    std::size_t azimuth_cells = 0;
    std::size_t range_cells = 0;
    double prf = 0.0;
    double range_sampling_rate = 0.0;
    double fast_time_origin = 0.0;  // s, fast time of range column 0
    double velocity = 0.0;

    /// Grid whose middle range column sits at `center_range`.
    static ImagingGrid centered(const SarParams& p, std::size_t azimuth_cells, std::size_t range_cells,
                                double center_range) {
        require(azimuth_cells >= 1 && range_cells >= 1, "ImagingGrid: empty grid");
        require(center_range > 0.0, "ImagingGrid: center range must be positive");
        ImagingGrid g;
        g.azimuth_cells = azimuth_cells;
        g.range_cells = range_cells;
        g.prf = p.prf;
        g.range_sampling_rate = p.range_sampling_rate;
        g.velocity = p.platform_velocity;
        g.fast_time_origin = 2.0 * center_range / kSpeedOfLight -
                             static_cast<double>(range_cells / 2) / p.range_sampling_rate;
        return g;
    }

    static ImagingGrid centered(const SarParams& p, std::size_t azimuth_cells, std::size_t range_cells) {
        return centered(p, azimuth_cells, range_cells, p.platform_height);
    }

    double fast_time(std::size_t k) const {
        return fast_time_origin + static_cast<double>(k) / range_sampling_rate;
    }
    double slow_time(std::size_t k) const { return static_cast<double>(k) / prf; }
    double azimuth_position(std::size_t k) const { return velocity * slow_time(k); }
    double closest_range(std::size_t k) const { return 0.5 * kSpeedOfLight * fast_time(k); }
    double center_range() const { return closest_range(range_cells / 2); }
    double aperture_end() const { return static_cast<double>(azimuth_cells) / prf; }

    std::vector<double> fast_times() const {
        std::vector<double> t(range_cells);
        for (std::size_t k = 0; k < range_cells; ++k) t[k] = fast_time(k);
        return t;
    }
    std::vector<double> slow_times() const {
        std::vector<double> t(azimuth_cells);
        for (std::size_t k = 0; k < azimuth_cells; ++k) t[k] = slow_time(k);
        return t;
    }
};

/// Complex scene raster, azimuth cells x range cells.
struct ReflectivityMap {
    CMatrix data;
    double azimuth_spacing = 1.0;  // m
    double range_spacing = 1.0;    // m

    ReflectivityMap() = default;
    ReflectivityMap(CMatrix d, double az, double rg) : data(std::move(d)), azimuth_spacing(az), range_spacing(rg) {
        validate();
    }

    Eigen::Index rows() const { return data.rows(); }
    Eigen::Index cols() const { return data.cols(); }

    void validate() const {
        require(data.rows() >= 1 && data.cols() >= 1, "ReflectivityMap: empty raster");
        require(azimuth_spacing > 0.0 && range_spacing > 0.0, "ReflectivityMap: spacings must be positive");
    }
};

/// Raw data raster, pulses x fast-time samples, with the slow time of each pulse.
struct EchoMatrix {
    CMatrix data;
    std::vector<double> azimuth_times;
    double fast_time_origin = 0.0;

    EchoMatrix() = default;
    EchoMatrix(CMatrix d, std::vector<double> times, double origin)
        : data(std::move(d)), azimuth_times(std::move(times)), fast_time_origin(origin) {
        validate();
    }

    void validate() const {
        require_shape(static_cast<std::size_t>(data.rows()) == azimuth_times.size(),
                      "EchoMatrix: row count differs from azimuth time count");
        for (std::size_t i = 1; i < azimuth_times.size(); ++i)
            require(azimuth_times[i] > azimuth_times[i - 1], "EchoMatrix: azimuth times not strictly increasing");
    }
};

inline double frobenius_relative_error(const CMatrix& a, const CMatrix& reference) {
    const double denom = reference.norm();
    return denom > 0.0 ? (a - reference).norm() / denom : (a - reference).norm();
}

/// Standard complex inner product, conjugate-linear in the first argument.
inline cdouble inner(const CMatrix& a, const CMatrix& b) {
    require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "inner: shape mismatch");
    cdouble acc{0.0, 0.0};
    for (Eigen::Index i = 0; i < a.size(); ++i) acc += std::conj(a.data()[i]) * b.data()[i];
    return acc;
}

}  // namespace mfjmodl
