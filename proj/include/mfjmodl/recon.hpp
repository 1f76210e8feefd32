#pragma once

#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "denoiser.hpp"
#include "operators.hpp"
#include "types.hpp"

namespace mfjmodl {

using LinearOperator = std::function<CMatrix(const CMatrix&)>;

/// CG hit a direction with non-positive curvature; the operator is not
/// positive definite on the current Krylov space.
class CgBreakdown : public Error {
public:
    using Error::Error;
};

class Divergence : public Error {
public:
    using Error::Error;
};

struct CgResult {
    CMatrix solution;
    int iterations = 0;
    double relative_residual = 0.0;
};

/// Conjugate gradient for a Hermitian positive definite operator, starting
/// from zero. Stops after `iterations` steps or once ||r|| <= tol * ||rhs||.
inline CgResult cg_solve(const LinearOperator& apply_normal, const CMatrix& rhs, int iterations, double tol) {
    require(iterations >= 1, "cg_solve: need at least one iteration");
    require(tol >= 0.0, "cg_solve: negative tolerance");
    CgResult res;
    res.solution = CMatrix::Zero(rhs.rows(), rhs.cols());
    const double b_norm = rhs.norm();
    if (b_norm == 0.0) return res;
    CMatrix r = rhs;
    CMatrix p = r;
    double rr = r.squaredNorm();
    for (int it = 0; it < iterations; ++it) {
        if (std::sqrt(rr) <= tol * b_norm || rr == 0.0) break;
        const CMatrix ap = apply_normal(p);
        require_shape(ap.rows() == p.rows() && ap.cols() == p.cols(), "cg_solve: operator changed the shape");
        const double curvature = inner(p, ap).real();
        if (!(curvature > 0.0) || !std::isfinite(curvature))
            throw CgBreakdown("cg_solve: non-positive curvature at iteration " + std::to_string(it));
        const double alpha = rr / curvature;
        res.solution += alpha * p;
        r -= alpha * ap;
        const double rr_next = r.squaredNorm();
        p = r + (rr_next / rr) * p;
        rr = rr_next;
        res.iterations = it + 1;
    }
    res.relative_residual = std::sqrt(rr) / b_norm;
    return res;
}

inline ReflectivityMap cg_solve(const LinearOperator& apply_normal, const ReflectivityMap& rhs, int iterations,
                                double tol) {
    return ReflectivityMap(cg_solve(apply_normal, rhs.data, iterations, tol).solution, rhs.azimuth_spacing,
                           rhs.range_spacing);
}

/// Unroll hyperparameters: K alternations of denoiser and data-consistency
/// solve, each solve capped at cg_iterations.
struct ModlConfig {
    int unroll_count = 5;
    int cg_iterations = 10;
    double lambda = 1.0;
    double cg_tolerance = 1e-10;

    void validate() const {
        require(unroll_count >= 1, "ModlConfig: unroll count must be >= 1");
        require(cg_iterations >= 1, "ModlConfig: CG iterations must be >= 1");
        require(std::isfinite(lambda) && lambda >= 0.0, "ModlConfig: lambda must be >= 0");
        require(cg_tolerance >= 0.0, "ModlConfig: negative CG tolerance");
    }
};

/// (H H* + lambda I) as a CG operator.
inline LinearOperator normal_operator(const CsaFilters& f, const NuftPlan& plan, double lambda) {
    return [&f, &plan, lambda](const CMatrix& x) { return op::normal(f, plan, lambda, x); };
}

/// Intermediate states of one unrolled reconstruction, kept for the reverse pass.
struct ModlTrace {
    CMatrix matched;                // H(S)
    std::vector<CMatrix> iterates;  // sigma_0 .. sigma_K
    std::vector<CMatrix> denoised;  // z_0 .. z_{K-1}
};

inline CMatrix modl_forward(const CMatrix& echo, const CsaFilters& f, const NuftPlan& plan, const DenoiserModel& model,
                            const ModlConfig& cfg, ModlTrace* trace = nullptr) {
    cfg.validate();
    model.validate();
    const CMatrix matched = op::image(f, plan, echo);
    const LinearOperator normal = normal_operator(f, plan, cfg.lambda);
    CMatrix sigma = matched;
    if (trace) {
        trace->matched = matched;
        trace->iterates = {sigma};
        trace->denoised.clear();
    }
    for (int k = 0; k < cfg.unroll_count; ++k) {
        const CMatrix z = denoiser_forward(model, sigma);
        const CMatrix rhs = matched + cfg.lambda * z;
        sigma = cg_solve(normal, rhs, cfg.cg_iterations, cfg.cg_tolerance).solution;
        if (trace) {
            trace->denoised.push_back(z);
            trace->iterates.push_back(sigma);
        }
    }
    return sigma;
}

inline ReflectivityMap modl_reconstruct(const EchoMatrix& echo, const CsaFilters& f, const NuftPlan& plan,
                                        const DenoiserModel& model, const ModlConfig& cfg) {
    require_shape(echo.azimuth_times.size() == plan.samples(), "modl_reconstruct: echo and plan pulse counts differ");
    return ReflectivityMap(modl_forward(echo.data, f, plan, model, cfg), f.azimuth_spacing, f.range_spacing);
}

/// Largest eigenvalue of H H* by power iteration from a seeded random start.
inline double estimate_normal_norm(const CsaFilters& f, const NuftPlan& plan, int iterations = 60,
                                   std::uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    CMatrix x(static_cast<Eigen::Index>(plan.doppler_bins()), f.range_bins());
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = cdouble(normal(rng), normal(rng));
    x /= x.norm();
    double estimate = 0.0;
    for (int it = 0; it < iterations; ++it) {
        CMatrix y = op::normal(f, plan, 0.0, x);
        estimate = inner(x, y).real();
        const double n = y.norm();
        if (n == 0.0) return 0.0;
        x = y / n;
    }
    return estimate;
}

/// Complex soft threshold: shrinks magnitudes by t, keeps phases.
inline CMatrix soft_threshold(const CMatrix& x, double t) {
    CMatrix out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double a = std::abs(x.data()[i]);
        out.data()[i] = a > t ? x.data()[i] * ((a - t) / a) : cdouble(0.0, 0.0);
    }
    return out;
}

inline double l1_norm(const CMatrix& x) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) s += std::abs(x.data()[i]);
    return s;
}

struct IstaResult {
    ReflectivityMap image;
    std::vector<double> objective;  // F(sigma_k), k = 0 .. iterations
    double step = 0.0;
};

/// Iterative soft thresholding for ||S - H* sigma||^2 + lambda_l1 ||sigma||_1.
/// step <= 0 selects 0.99 / (2 ||H H*||). A per-iteration objective increase
/// beyond 1e-10 relative slack raises Divergence.
inline IstaResult ista_baseline(const EchoMatrix& echo, const CsaFilters& f, const NuftPlan& plan, double lambda_l1,
                                double step, int iterations) {
    require(lambda_l1 >= 0.0, "ista_baseline: lambda_l1 must be non-negative");
    require(iterations >= 0, "ista_baseline: negative iteration count");
    require_shape(echo.azimuth_times.size() == plan.samples(), "ista_baseline: echo and plan pulse counts differ");
    const double lipschitz = 2.0 * estimate_normal_norm(f, plan);
    if (step <= 0.0) step = lipschitz > 0.0 ? 0.99 / lipschitz : 1.0;
    require(step * lipschitz <= 1.0 + 1e-6, "ista_baseline: step exceeds the stability bound 1/L");

    const CMatrix& s = echo.data;
    auto objective = [&](const CMatrix& x) {
        return (op::inverse(f, plan, x) - s).squaredNorm() + lambda_l1 * l1_norm(x);
    };
    CMatrix x = CMatrix::Zero(static_cast<Eigen::Index>(plan.doppler_bins()), f.range_bins());
    IstaResult out;
    out.step = step;
    out.objective.push_back(objective(x));
    for (int it = 0; it < iterations; ++it) {
        const CMatrix grad = 2.0 * op::image(f, plan, CMatrix(op::inverse(f, plan, x) - s));
        x = soft_threshold(x - step * grad, step * lambda_l1);
        const double value = objective(x);
        const double prev = out.objective.back();
        if (!std::isfinite(value) || value > prev + 1e-10 * std::max(1.0, std::abs(prev)))
            throw Divergence("ista_baseline: objective increased at iteration " + std::to_string(it));
        out.objective.push_back(value);
    }
    out.image = ReflectivityMap(std::move(x), f.azimuth_spacing, f.range_spacing);
    return out;
}

}  // namespace mfjmodl
