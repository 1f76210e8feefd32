#pragma once

// Joint learning of the azimuth sampling pattern, denoiser weights and the
// data-consistency weight lambda. Gradients are explicit: the CG blocks are
// differentiated with the converged-solve identity (the Jacobian of
// (H H* + lambda I)^-1 is itself), and the dependence of H on the pulse
// times is accumulated at every NF/NIF application.

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <vector>

#include "recon.hpp"
#include "sampling.hpp"

namespace mfjmodl {

/// Squared Frobenius norm of the difference (real and imaginary parts).
inline double mse_loss(const CMatrix& reconstruction, const CMatrix& target) {
    require_shape(reconstruction.rows() == target.rows() && reconstruction.cols() == target.cols(),
                  "mse_loss: shape mismatch");
    return (reconstruction - target).squaredNorm();
}

inline double mse_loss(const ReflectivityMap& reconstruction, const ReflectivityMap& target) {
    return mse_loss(reconstruction.data, target.data);
}

/// (H H* + lambda I)^-1 applied to an upstream gradient. The operator is
/// Hermitian, so this is also the transpose-Jacobian product of the solve.
inline CMatrix cg_backprop(const LinearOperator& apply_normal, const CMatrix& upstream, int iterations, double tol) {
    return cg_solve(apply_normal, upstream, iterations, tol).solution;
}

inline DenoiserGradient denoiser_backprop(const DenoiserModel& model, const CMatrix& input, const CMatrix& upstream) {
    return denoiser_backward(model, input, upstream);
}

struct GradBundle {
    std::vector<double> d_pattern;  // dL/d eta_m
    DenoiserModel d_weights;
    double d_lambda = 0.0;
    CMatrix d_echo;  // dL/dS, for callers that differentiate echo generation
};

/// d/d(eta) of -Re<u, (H H*) sigma> with u and sigma held fixed: the
/// operator-derivative term of one data-consistency solve.
inline std::vector<double> normal_operator_position_vjp(const CsaFilters& f, const NuftPlan& plan, const CMatrix& u,
                                                        const CMatrix& sigma) {
    const CMatrix head = op::inverse_head(f, sigma);      // Q sigma
    const CMatrix echo = nuift_inverse(plan, head);       // NIF Q sigma
    const double inv_na = 1.0 / static_cast<double>(plan.doppler_bins());
    const CMatrix g_doppler = op::inverse_head(f, CMatrix(-u)) * inv_na;  // P^H (-u)
    std::vector<double> d = nuft_forward_position_vjp(plan, echo, g_doppler);
    const CMatrix g_echo = plan.forward_matrix().adjoint() * g_doppler;
    const std::vector<double> d2 = nuift_inverse_position_vjp(plan, head, g_echo);
    for (std::size_t m = 0; m < d.size(); ++m) d[m] += d2[m];
    return d;
}

struct BackpropOptions {
    int cg_iterations = 0;  // 0: same cap as the forward solve
    double cg_tolerance = -1.0;  // < 0: same tolerance as the forward solve
};

/// Reverse pass of modl_forward for L with dL/d sigma_K = upstream.
inline GradBundle modl_backward(const ModlTrace& trace, const CMatrix& echo, const CsaFilters& f,
                                const NuftPlan& plan, const DenoiserModel& model, const ModlConfig& cfg,
                                const CMatrix& upstream, const BackpropOptions& opts = {}) {
    const int k_unrolls = cfg.unroll_count;
    require(static_cast<int>(trace.denoised.size()) == k_unrolls &&
                static_cast<int>(trace.iterates.size()) == k_unrolls + 1,
            "modl_backward: missing captured state");
    const int iters = opts.cg_iterations > 0 ? opts.cg_iterations : cfg.cg_iterations;
    const double tol = opts.cg_tolerance >= 0.0 ? opts.cg_tolerance : cfg.cg_tolerance;
    const LinearOperator normal = normal_operator(f, plan, cfg.lambda);

    GradBundle g;
    g.d_pattern.assign(plan.samples(), 0.0);
    g.d_weights = model.zeros_like();
    CMatrix g_sigma = upstream;
    CMatrix g_matched = CMatrix::Zero(trace.matched.rows(), trace.matched.cols());
    for (int n = k_unrolls - 1; n >= 0; --n) {
        const CMatrix& next = trace.iterates[static_cast<std::size_t>(n + 1)];
        const CMatrix& z = trace.denoised[static_cast<std::size_t>(n)];
        const CMatrix u = cg_backprop(normal, g_sigma, iters, tol);
        g_matched += u;
        g.d_lambda += inner(u, z - next).real();
        const std::vector<double> dp = normal_operator_position_vjp(f, plan, u, next);
        for (std::size_t m = 0; m < dp.size(); ++m) g.d_pattern[m] += dp[m];
        const DenoiserGradient dg =
            denoiser_backward(model, trace.iterates[static_cast<std::size_t>(n)], CMatrix(cfg.lambda * u));
        for (std::size_t l = 0; l < model.layers.size(); ++l) {
            auto& acc = g.d_weights.layers[l];
            const auto& add = dg.d_weights.layers[l];
            for (std::size_t k = 0; k < acc.weights.size(); ++k) acc.weights[k] += add.weights[k];
            for (std::size_t k = 0; k < acc.bias.size(); ++k) acc.bias[k] += add.bias[k];
        }
        g_sigma = dg.d_input;
    }
    g_matched += g_sigma;  // sigma_0 is the matched-filter image itself

    // matched = P(NF S): position term of NF, then dL/dS = H* g_matched.
    const double inv_na = 1.0 / static_cast<double>(plan.doppler_bins());
    const CMatrix g_doppler = op::inverse_head(f, g_matched) * inv_na;
    const std::vector<double> dp = nuft_forward_position_vjp(plan, echo, g_doppler);
    for (std::size_t m = 0; m < dp.size(); ++m) g.d_pattern[m] += dp[m];
    g.d_echo = plan.forward_matrix().adjoint() * g_doppler;
    return g;
}

/// dL/d eta through every NF/NIF application of the unrolled network.
inline std::vector<double> pattern_gradient(const NuftPlan& plan, const CsaFilters& f, const ModlTrace& trace,
                                            const CMatrix& echo, const DenoiserModel& model, const ModlConfig& cfg,
                                            const CMatrix& upstream) {
    return modl_backward(trace, echo, f, plan, model, cfg, upstream).d_pattern;
}

/// Produces the echo seen at a given pattern, and optionally the position
/// gradient of Re<g, echo> for differentiating through data generation.
struct TrainingExample {
    std::function<CMatrix(const NuftPlan&, std::uint64_t noise_seed)> echo;
    std::function<std::vector<double>(const NuftPlan&, const CMatrix& grad_echo)> echo_position_vjp;
    CMatrix target;
};

/// Echo synthesized by the model-based forward operator H*(sigma) at the
/// current pulse times, plus seeded complex noise.
inline TrainingExample operator_example(const CsaFilters& f, CMatrix target, double noise_sigma) {
    TrainingExample ex;
    auto head = std::make_shared<CMatrix>(op::inverse_head(f, target));
    ex.echo = [head, noise_sigma](const NuftPlan& plan, std::uint64_t seed) {
        CMatrix s = nuift_inverse(plan, *head);
        if (noise_sigma > 0.0) {
            std::mt19937_64 rng(seed);
            std::normal_distribution<double> normal(0.0, noise_sigma / std::sqrt(2.0));
            for (Eigen::Index i = 0; i < s.size(); ++i) {
                const double re = normal(rng);
                const double im = normal(rng);
                s.data()[i] += cdouble(re, im);
            }
        }
        return s;
    };
    ex.echo_position_vjp = [head](const NuftPlan& plan, const CMatrix& grad_echo) {
        return nuift_inverse_position_vjp(plan, *head, grad_echo);
    };
    ex.target = std::move(target);
    return ex;
}

enum class PatternGradientMode {
    ReconstructionOnly,  // echo treated as fixed input
    ThroughEcho,         // also differentiate the echo's dependence on the pulse times
};

struct SampleEvaluation {
    double loss = 0.0;
    GradBundle grad;
    CMatrix reconstruction;
};

/// Forward + reverse pass for one example at the given parameters.
inline SampleEvaluation evaluate_sample(const TrainingExample& ex, const NuftPlan& plan, const CsaFilters& f,
                                        const DenoiserModel& model, const ModlConfig& cfg, std::uint64_t noise_seed,
                                        PatternGradientMode mode, bool with_gradient = true,
                                        const BackpropOptions& opts = {}) {
    const CMatrix echo = ex.echo(plan, noise_seed);
    ModlTrace trace;
    SampleEvaluation out;
    out.reconstruction = modl_forward(echo, f, plan, model, cfg, with_gradient ? &trace : nullptr);
    out.loss = mse_loss(out.reconstruction, ex.target);
    if (!with_gradient || !std::isfinite(out.loss)) return out;
    const CMatrix upstream = 2.0 * (out.reconstruction - ex.target);
    out.grad = modl_backward(trace, echo, f, plan, model, cfg, upstream, opts);
    if (mode == PatternGradientMode::ThroughEcho && ex.echo_position_vjp) {
        const std::vector<double> de = ex.echo_position_vjp(plan, out.grad.d_echo);
        for (std::size_t m = 0; m < de.size(); ++m) out.grad.d_pattern[m] += de[m];
    }
    return out;
}

/// Adaptive-moment optimizer state for one parameter group.
struct Adam {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::vector<double> m;
    std::vector<double> v;
    long step_count = 0;

    void step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
        require(params.size() == grad.size(), "Adam: parameter and gradient sizes differ");
        if (m.empty()) {
            m.assign(params.size(), 0.0);
            v.assign(params.size(), 0.0);
        }
        require(m.size() == params.size(), "Adam: moment shape does not match parameters");
        ++step_count;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
};

/// Trainable parameters plus optimizer moments. lambda = exp(rho).
struct TrainState {
    SamplingPattern pattern;
    DenoiserModel model;
    double rho = 0.0;
    Adam pattern_opt;
    Adam weight_opt;
    Adam rho_opt;
    int epoch = 0;
    std::uint64_t seed = 0;

    double lambda() const { return std::exp(rho); }
};

struct LearningRates {
    double pattern = 0.0;  // seconds per step
    double weights = 1e-3;
    double lambda = 1e-3;  // applied to rho = log(lambda)

    /// Pattern steps of 1e-4 PRI, weights and lambda at 1e-3.
    static LearningRates standard(double prf) {
        require(prf > 0.0, "LearningRates: PRF must be positive");
        return {1e-4 / prf, 1e-3, 1e-3};
    }
};

struct TrainOptions {
    int unroll_count = 5;
    int cg_iterations = 10;
    double cg_tolerance = 1e-10;
    PatternGradientMode mode = PatternGradientMode::ReconstructionOnly;
    std::size_t doppler_bins = 0;  // Na; 0 takes the filters' Doppler size
};

struct LossRecord {
    int epoch = 0;
    std::size_t sample = 0;
    double loss = 0.0;
};

class NonFiniteLoss : public Error {
public:
    using Error::Error;
};

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline ModlConfig modl_config_for(const TrainState& s, const TrainOptions& o) {
    ModlConfig cfg;
    cfg.unroll_count = o.unroll_count;
    cfg.cg_iterations = o.cg_iterations;
    cfg.cg_tolerance = o.cg_tolerance;
    cfg.lambda = s.lambda();
    return cfg;
}

/// Per-sample (batch size 1) joint training. Each step regenerates the echo
/// at the current pattern, runs the unrolled reconstruction, backpropagates,
/// updates every parameter group with a non-zero rate, and projects the
/// pattern back onto its constraints.
inline std::vector<LossRecord> train_joint(const std::vector<TrainingExample>& dataset, TrainState& state,
                                           const CsaFilters& f, double prf, int epochs, const LearningRates& rates,
                                           const TrainOptions& opts = {},
                                           const std::function<void(const LossRecord&)>& on_step = {}) {
    require(!dataset.empty(), "train_joint: empty dataset");
    require(epochs >= 0, "train_joint: negative epoch count");
    state.pattern.validate();
    const std::size_t na = opts.doppler_bins ? opts.doppler_bins : static_cast<std::size_t>(f.doppler_bins());
    std::vector<LossRecord> history;
    for (int e = 0; e < epochs; ++e) {
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            const NuftPlan plan(state.pattern, na, prf);
            const ModlConfig cfg = modl_config_for(state, opts);
            const std::uint64_t noise_seed = mix_seed(mix_seed(state.seed, static_cast<std::uint64_t>(state.epoch)), i);
            auto fail = [&](const std::string& why) {
                std::ostringstream os;
                os << "train_joint: " << why << " at epoch " << state.epoch << " sample " << i << "; lambda "
                   << state.lambda() << "; pattern";
                for (double t : state.pattern.positions) os << ' ' << t;
                throw NonFiniteLoss(os.str());
            };
            SampleEvaluation ev;
            try {
                ev = evaluate_sample(dataset[i], plan, f, state.model, cfg, noise_seed, opts.mode);
            } catch (const CgBreakdown& e) {
                fail(std::string("solver breakdown (") + e.what() + ")");
            }
            if (!std::isfinite(ev.loss)) fail("non-finite loss");
            const LossRecord rec{state.epoch, i, ev.loss};
            history.push_back(rec);
            if (on_step) on_step(rec);

            if (rates.weights != 0.0) {
                std::vector<double> w = state.model.flatten();
                state.weight_opt.step(w, ev.grad.d_weights.flatten(), rates.weights);
                state.model.unflatten(w);
            }
            if (rates.lambda != 0.0) {
                std::vector<double> r{state.rho};
                state.rho_opt.step(r, {state.lambda() * ev.grad.d_lambda}, rates.lambda);
                state.rho = r[0];
            }
            if (rates.pattern != 0.0) {
                std::vector<double> pos = state.pattern.positions;
                state.pattern_opt.step(pos, ev.grad.d_pattern, rates.pattern);
                state.pattern = project_constraints(pos, state.pattern.aperture, state.pattern.min_spacing);
            }
        }
        ++state.epoch;
    }
    return history;
}

struct FdReport {
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    std::vector<double> numeric;
};

/// Central differences of `loss` at the selected coordinates of `params`,
/// compared with `analytic`. Each entry's error is relative to
/// max(|analytic_i|, |numeric_i|, floor), with floor = floor_fraction times the
/// largest analytic magnitude among the selected entries.
inline FdReport finite_difference_check(const std::vector<std::size_t>& selected, std::vector<double> params,
                                        const std::function<double(const std::vector<double>&)>& loss,
                                        const std::vector<double>& analytic, double step,
                                        double floor_fraction = 1e-3) {
    require(analytic.size() == params.size(), "finite_difference_check: gradient size mismatch");
    require(step > 0.0 && std::isfinite(step), "finite_difference_check: step must be positive");
    double scale = 0.0;
    for (std::size_t i : selected) scale = std::max(scale, std::abs(analytic.at(i)));
    const double floor = std::max(floor_fraction * scale, std::numeric_limits<double>::min());
    FdReport rep;
    for (std::size_t i : selected) {
        const double x = params.at(i);
        if (x + step == x || x - step == x) throw InvalidArgument("finite_difference_check: step underflows parameter");
        params[i] = x + step;
        const double up = loss(params);
        params[i] = x - step;
        const double down = loss(params);
        params[i] = x;
        const double fd = (up - down) / (2.0 * step);
        rep.numeric.push_back(fd);
        const double err = std::abs(fd - analytic[i]) / std::max({std::abs(analytic[i]), std::abs(fd), floor});
        if (err > rep.max_relative_error) {
            rep.max_relative_error = err;
            rep.worst_index = i;
        }
    }
    return rep;
}

}  // namespace mfjmodl
