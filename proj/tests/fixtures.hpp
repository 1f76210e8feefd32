#pragma once

// Small training instances shared by the gradient tests and the acceptance run.

#include <random>

#include "mfjmodl/sar_core.hpp"
#include "mfjmodl/training.hpp"

namespace fixture {

using namespace mfjmodl;

struct Toy {
    SarParams p;
    ImagingGrid g;
    CsaFilters f;
    std::size_t na;
    Aperture aperture;

    Toy(std::size_t na_, std::size_t nr)
        : g(ImagingGrid::centered(p, na_, nr)),
          f(make_csa_filters(p, NuftPlan(g.slow_times(), na_, p.prf), g)),
          na(na_),
          aperture{0.0, static_cast<double>(na_) / p.prf} {}

    NuftPlan plan(const std::vector<double>& eta) const { return NuftPlan(eta, na, p.prf); }
};

inline CMatrix sparse_scene(Eigen::Index rows, Eigen::Index cols, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    CMatrix s = CMatrix::Zero(rows, cols);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int k = 0; k < count; ++k)
        s(static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(rows)),
          static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(cols))) = cdouble(n(rng), n(rng));
    return s;
}

inline ModlConfig tight(int k, double lambda) {
    ModlConfig cfg;
    cfg.unroll_count = k;
    cfg.lambda = lambda;
    cfg.cg_iterations = 10;
    cfg.cg_tolerance = 1e-14;
    return cfg;
}

struct FdCase {
    Toy toy{8, 8};
    std::vector<double> eta;
    DenoiserModel model;
    TrainingExample ex;
    ModlConfig cfg;
    PatternGradientMode mode;

    FdCase(std::uint64_t seed, std::size_t m, int k, PatternGradientMode md) : mode(md) {
        std::mt19937_64 rng(seed);
        eta = jittered_uniform_pattern(toy.aperture, m, 0.1 / toy.p.prf, 0.3, rng()).positions;
        model = DenoiserModel::make(2, 4, rng(), true, 0.5);
        for (auto& L : model.layers)
            for (double& b : L.bias) b = std::normal_distribution<double>(0.0, 0.1)(rng);
        ex = operator_example(toy.f, sparse_scene(8, 8, 6, rng()), 0.05);
        cfg = tight(k, 0.5 + 0.1 * static_cast<double>(rng() % 10));
    }

    // Reconstruction-only gradients treat the echo as data, so the probe
    // keeps the echo generated at the unperturbed pattern.
    double loss(const std::vector<double>& positions, const DenoiserModel& m, double lambda) const {
        ModlConfig c = cfg;
        c.lambda = lambda;
        TrainingExample probe = ex;
        if (mode == PatternGradientMode::ReconstructionOnly) {
            const CMatrix fixed = ex.echo(toy.plan(eta), 99);
            probe.echo = [fixed](const NuftPlan&, std::uint64_t) { return fixed; };
        }
        return evaluate_sample(probe, toy.plan(positions), toy.f, m, c, 99, mode, false).loss;
    }

    std::vector<std::vector<double>> pre_activation_signs(const std::vector<double>& positions) const {
        const NuftPlan plan = toy.plan(positions);
        const CMatrix echo = ex.echo(mode == PatternGradientMode::ReconstructionOnly ? toy.plan(eta) : plan, 99);
        ModlTrace trace;
        modl_forward(echo, toy.f, plan, model, cfg, &trace);
        std::vector<std::vector<double>> signs;
        for (int k = 0; k < cfg.unroll_count; ++k) {
            DenoiserCache cache;
            denoiser_forward(model, trace.iterates[static_cast<std::size_t>(k)], &cache);
            for (const auto& z : cache.pre_activations) {
                signs.emplace_back();
                for (double v : z.data) signs.back().push_back(v > 0.0 ? 1.0 : 0.0);
            }
        }
        return signs;
    }

    // True when some ReLU changes state inside the central-difference stencil.
    bool stencil_crosses_kink(double step) const {
        for (std::size_t i = 0; i < eta.size(); ++i) {
            std::vector<double> lo = eta, hi = eta;
            lo[i] -= step;
            hi[i] += step;
            if (pre_activation_signs(lo) != pre_activation_signs(hi)) return true;
        }
        return false;
    }

    SampleEvaluation eval() const { return evaluate_sample(ex, toy.plan(eta), toy.f, model, cfg, 99, mode); }
};

}  // namespace fixture
