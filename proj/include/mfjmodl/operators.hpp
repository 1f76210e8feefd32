#pragma once

// Nonuniform matched-filter operator pair. The imaging operator maps an echo
// sampled at arbitrary pulse times to a focused image through an explicit
// nonuniform azimuth DFT and the three chirp-scaling phase filters; the
// inverse runs the conjugated chain backwards and resamples at the pulse
// times. With NIF = NF^H / Na the inverse is exactly the adjoint of the
// imaging operator under the standard inner product.

#include <vector>

#include "fft.hpp"
#include "sampling.hpp"
#include "types.hpp"

namespace mfjmodl {

/// Doppler bins f_n = n * prf / Na in storage order; for evaluation each bin
/// is taken at its baseband alias (bins at or above prf/2 are negative).
class NuftPlan {
public:
    NuftPlan(std::vector<double> positions, std::size_t doppler_bins, double prf)
        : positions_(std::move(positions)), doppler_bins_(doppler_bins), prf_(prf) {
        require(!positions_.empty(), "NuftPlan: need at least one azimuth sample");
        require(doppler_bins_ >= 1, "NuftPlan: need at least one Doppler bin");
        require(std::isfinite(prf_) && prf_ > 0.0, "NuftPlan: prf must be positive");
        for (double t : positions_) require(std::isfinite(t), "NuftPlan: non-finite sample time");
        const auto na = static_cast<Eigen::Index>(doppler_bins_);
        const auto m = static_cast<Eigen::Index>(positions_.size());
        forward_.resize(na, m);
        inverse_.resize(m, na);
        const double inv_na = 1.0 / static_cast<double>(doppler_bins_);
        for (Eigen::Index n = 0; n < na; ++n) {
            const double f = doppler_frequency(static_cast<std::size_t>(n));
            for (Eigen::Index k = 0; k < m; ++k) {
                const double phase = 2.0 * kPi * positions_[static_cast<std::size_t>(k)] * f;
                forward_(n, k) = std::polar(1.0, -phase);
                inverse_(k, n) = std::polar(inv_na, phase);
            }
        }
    }

    NuftPlan(const SamplingPattern& pattern, std::size_t doppler_bins, double prf)
        : NuftPlan(pattern.positions, doppler_bins, prf) {}

    const std::vector<double>& positions() const { return positions_; }
    std::size_t samples() const { return positions_.size(); }
    std::size_t doppler_bins() const { return doppler_bins_; }
    double prf() const { return prf_; }

    double storage_frequency(std::size_t n) const {
        return static_cast<double>(n) * prf_ / static_cast<double>(doppler_bins_);
    }
    double doppler_frequency(std::size_t n) const { return fft::baseband_frequency(n, doppler_bins_, prf_); }

    /// NF, Na x M.
    const CMatrix& forward_matrix() const { return forward_; }
    /// NIF, M x Na.
    const CMatrix& inverse_matrix() const { return inverse_; }

private:
    std::vector<double> positions_;
    std::size_t doppler_bins_;
    double prf_;
    CMatrix forward_;
    CMatrix inverse_;
};

/// Azimuth samples (M x Nr) to Doppler bins (Na x Nr), column by column.
inline CMatrix nuft_forward(const NuftPlan& plan, const CMatrix& signal) {
    require_shape(static_cast<std::size_t>(signal.rows()) == plan.samples(), "nuft_forward: signal length mismatch");
    return plan.forward_matrix() * signal;
}

/// Doppler bins (Na x Nr) back to the pulse times (M x Nr), including 1/Na.
inline CMatrix nuift_inverse(const NuftPlan& plan, const CMatrix& doppler) {
    require_shape(static_cast<std::size_t>(doppler.rows()) == plan.doppler_bins(),
                  "nuift_inverse: Doppler length mismatch");
    return plan.inverse_matrix() * doppler;
}

/// d/d(eta_m) of Re<g, NF x>: the entry derivative of NF is -j*2*pi*f_n.
inline std::vector<double> nuft_forward_position_vjp(const NuftPlan& plan, const CMatrix& x, const CMatrix& grad_out) {
    require_shape(static_cast<std::size_t>(x.rows()) == plan.samples() &&
                      static_cast<std::size_t>(grad_out.rows()) == plan.doppler_bins() && x.cols() == grad_out.cols(),
                  "nuft_forward_position_vjp: shape mismatch");
    const auto na = static_cast<Eigen::Index>(plan.doppler_bins());
    CMatrix weighted = grad_out.conjugate();
    for (Eigen::Index n = 0; n < na; ++n)
        weighted.row(n) *= cdouble(0.0, -2.0 * kPi * plan.doppler_frequency(static_cast<std::size_t>(n)));
    const CMatrix c = plan.forward_matrix().transpose() * weighted;  // M x Nr
    std::vector<double> d(plan.samples());
    for (Eigen::Index m = 0; m < x.rows(); ++m) d[static_cast<std::size_t>(m)] = (x.row(m).cwiseProduct(c.row(m))).sum().real();
    return d;
}

/// d/d(eta_m) of Re<g, NIF x>: the entry derivative of NIF is +j*2*pi*f_n.
inline std::vector<double> nuift_inverse_position_vjp(const NuftPlan& plan, const CMatrix& x, const CMatrix& grad_out) {
    require_shape(static_cast<std::size_t>(x.rows()) == plan.doppler_bins() &&
                      static_cast<std::size_t>(grad_out.rows()) == plan.samples() && x.cols() == grad_out.cols(),
                  "nuift_inverse_position_vjp: shape mismatch");
    CMatrix weighted = x;
    for (Eigen::Index n = 0; n < x.rows(); ++n)
        weighted.row(n) *= cdouble(0.0, 2.0 * kPi * plan.doppler_frequency(static_cast<std::size_t>(n)));
    const CMatrix dy = plan.inverse_matrix() * weighted;  // M x Nr
    std::vector<double> d(plan.samples());
    for (Eigen::Index m = 0; m < dy.rows(); ++m)
        d[static_cast<std::size_t>(m)] = (grad_out.row(m).conjugate().cwiseProduct(dy.row(m))).sum().real();
    return d;
}

/// Three unit-modulus phase screens, each Na x Nr: theta1 and theta3 live in
/// the range-Doppler domain, theta2 in the 2-D frequency domain.
struct CsaFilters {
    CMatrix theta1;
    CMatrix theta2;
    CMatrix theta3;
    double reference_range = 0.0;
    double range_sampling_rate = 0.0;
    double fast_time_origin = 0.0;
    double azimuth_spacing = 1.0;
    double range_spacing = 1.0;

    Eigen::Index doppler_bins() const { return theta1.rows(); }
    Eigen::Index range_bins() const { return theta1.cols(); }
};

/// Range migration factor D(f) = sqrt(1 - (lambda f / 2v)^2).
inline double migration_factor(const SarParams& p, double doppler_frequency) {
    const double s = p.wavelength * doppler_frequency / (2.0 * p.platform_velocity);
    const double d2 = 1.0 - s * s;
    if (!(d2 > 0.0)) throw InvalidArgument("migration factor is not positive (evanescent Doppler bin)");
    return std::sqrt(d2);
}

/// Range chirp rate modified by range-azimuth coupling at reference range r_ref.
inline double modified_chirp_rate(const SarParams& p, double doppler_frequency, double r_ref) {
    const double d = migration_factor(p, doppler_frequency);
    const double f0 = p.carrier_frequency;
    const double kr = p.range_chirp_rate;
    return kr / (1.0 - kr * p.wavelength * r_ref * doppler_frequency * doppler_frequency /
                           (2.0 * p.platform_velocity * p.platform_velocity * f0 * f0 * d * d * d));
}

/// Standard chirp-scaling filters for a broadside geometry (reference Doppler
/// zero, so D_ref = 1). Closest range per column is c * tau / 2.
inline CsaFilters make_csa_filters(const SarParams& p, const NuftPlan& plan, const std::vector<double>& fast_time_grid,
                                   double r_ref) {
    p.validate();
    require(!fast_time_grid.empty(), "make_csa_filters: empty fast-time grid");
    require(r_ref > 0.0, "make_csa_filters: reference range must be positive");
    require(std::abs(plan.prf() - p.prf) <= 1e-9 * p.prf, "make_csa_filters: plan prf differs from radar prf");
    const auto na = static_cast<Eigen::Index>(plan.doppler_bins());
    const auto nr = static_cast<Eigen::Index>(fast_time_grid.size());
    const double c = kSpeedOfLight;
    const double f0 = p.carrier_frequency;
    CsaFilters out;
    out.theta1.resize(na, nr);
    out.theta2.resize(na, nr);
    out.theta3.resize(na, nr);
    out.reference_range = r_ref;
    out.range_sampling_rate = p.range_sampling_rate;
    out.fast_time_origin = fast_time_grid.front();
    out.azimuth_spacing = p.azimuth_spacing();
    out.range_spacing = p.range_spacing();
    for (Eigen::Index n = 0; n < na; ++n) {
        const double f_eta = plan.doppler_frequency(static_cast<std::size_t>(n));
        require(std::abs(f_eta) < p.prf, "make_csa_filters: Doppler frequency beyond prf");
        const double d = migration_factor(p, f_eta);
        const double km = modified_chirp_rate(p, f_eta, r_ref);
        for (Eigen::Index k = 0; k < nr; ++k) {
            const double tau = fast_time_grid[static_cast<std::size_t>(k)];
            const double f_tau =
                fft::baseband_frequency(static_cast<std::size_t>(k), static_cast<std::size_t>(nr), p.range_sampling_rate);
            const double r0 = 0.5 * c * tau;

            const double u = tau - 2.0 * r_ref / (c * d);
            const double scaling = kPi * km * (1.0 / d - 1.0) * u * u;
            out.theta1(n, k) = std::polar(1.0, scaling);

            const double compression = kPi * d * f_tau * f_tau / km;
            const double bulk_rcmc = 4.0 * kPi * r_ref * f_tau * (1.0 / d - 1.0) / c;
            out.theta2(n, k) = std::polar(1.0, compression + bulk_rcmc);

            const double azimuth = 4.0 * kPi * r0 * f0 * d / c;
            const double dr = (r0 - r_ref) / d;
            const double residual = 4.0 * kPi * km * (1.0 - d) * dr * dr / (c * c);
            out.theta3(n, k) = std::polar(1.0, azimuth - residual);
        }
    }
    return out;
}

inline CsaFilters make_csa_filters(const SarParams& p, const NuftPlan& plan, const ImagingGrid& grid) {
    return make_csa_filters(p, plan, grid.fast_times(), grid.center_range());
}

namespace op {

inline void check_filters(const CsaFilters& f, const NuftPlan& plan, Eigen::Index range_bins) {
    require_shape(static_cast<std::size_t>(f.doppler_bins()) == plan.doppler_bins(),
                  "CSA filters and plan disagree on Doppler bins");
    require_shape(f.range_bins() == range_bins, "CSA filters and data disagree on range bins");
}

/// Range-Doppler data after the azimuth transform -> image.
inline CMatrix image_tail(const CsaFilters& f, CMatrix x) {
    x.array() *= f.theta1.array();
    fft::rows(x, fft::Direction::Forward);
    x.array() *= f.theta2.array();
    fft::rows(x, fft::Direction::Inverse);
    x.array() *= f.theta3.array();
    fft::cols(x, fft::Direction::Inverse);
    return x;
}

/// Image -> range-Doppler data ready for the inverse azimuth transform.
inline CMatrix inverse_head(const CsaFilters& f, CMatrix x) {
    fft::cols(x, fft::Direction::Forward);
    x.array() *= f.theta3.array().conjugate();
    fft::rows(x, fft::Direction::Forward);
    x.array() *= f.theta2.array().conjugate();
    fft::rows(x, fft::Direction::Inverse);
    x.array() *= f.theta1.array().conjugate();
    return x;
}

inline CMatrix image(const CsaFilters& f, const NuftPlan& plan, const CMatrix& echo) {
    require_shape(static_cast<std::size_t>(echo.rows()) == plan.samples(), "csa_image: pulse count mismatch");
    check_filters(f, plan, echo.cols());
    return image_tail(f, nuft_forward(plan, echo));
}

inline CMatrix inverse(const CsaFilters& f, const NuftPlan& plan, const CMatrix& scene) {
    require_shape(static_cast<std::size_t>(scene.rows()) == plan.doppler_bins(), "csa_inverse: azimuth size mismatch");
    check_filters(f, plan, scene.cols());
    return nuift_inverse(plan, inverse_head(f, scene));
}

inline CMatrix normal(const CsaFilters& f, const NuftPlan& plan, double lambda, const CMatrix& x) {
    CMatrix y = image(f, plan, inverse(f, plan, x));
    if (lambda != 0.0) y += lambda * x;
    return y;
}

}  // namespace op

inline ReflectivityMap csa_image(const CsaFilters& f, const NuftPlan& plan, const EchoMatrix& echo) {
    require_shape(echo.azimuth_times.size() == plan.samples(), "csa_image: echo and plan pulse counts differ");
    const double tol = 1e-9 / plan.prf();
    for (std::size_t i = 0; i < plan.samples(); ++i)
        require_shape(std::abs(echo.azimuth_times[i] - plan.positions()[i]) <= tol,
                      "csa_image: echo pulse times differ from plan positions");
    return ReflectivityMap(op::image(f, plan, echo.data), f.azimuth_spacing, f.range_spacing);
}

inline EchoMatrix csa_inverse(const CsaFilters& f, const NuftPlan& plan, const ReflectivityMap& scene) {
    scene.validate();
    return EchoMatrix(op::inverse(f, plan, scene.data), plan.positions(), f.fast_time_origin);
}

inline ReflectivityMap normal_apply(const CsaFilters& f, const NuftPlan& plan, double lambda,
                                    const ReflectivityMap& image) {
    require(lambda >= 0.0, "normal_apply: lambda must be non-negative");
    return ReflectivityMap(op::normal(f, plan, lambda, image.data), image.azimuth_spacing, image.range_spacing);
}

}  // namespace mfjmodl
