#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <random>

#include "mfjmodl/recon.hpp"
#include "mfjmodl/sampling.hpp"
#include "mfjmodl/sar_core.hpp"
#include "oracles.hpp"

using namespace mfjmodl;

namespace {

struct System {
    SarParams p;
    ImagingGrid g;
    NuftPlan plan;
    CsaFilters f;
    System(std::size_t na, std::size_t nr, std::vector<double> positions = {})
        : g(ImagingGrid::centered(p, na, nr)),
          plan(positions.empty() ? g.slow_times() : positions, na, p.prf),
          f(make_csa_filters(p, plan, g)) {}
};

std::vector<double> subsample(std::size_t na, std::size_t m, std::uint64_t seed) {
    return poisson_disk_pattern({0.0, static_cast<double>(na) / 200.0}, m, 0.1 / 200.0, seed).positions;
}

// Dense matrix of a linear map on Na x Nr images, column-major vectorization.
Eigen::MatrixXcd dense_of(const std::function<CMatrix(const CMatrix&)>& op, Eigen::Index in_rows, Eigen::Index cols,
                          Eigen::Index out_rows) {
    Eigen::MatrixXcd a(out_rows * cols, in_rows * cols);
    for (Eigen::Index j = 0; j < in_rows * cols; ++j) {
        Eigen::VectorXcd e = Eigen::VectorXcd::Zero(in_rows * cols);
        e(j) = 1.0;
        a.col(j) = vectorize(op(unvectorize(e, in_rows, cols)));
    }
    return a;
}

DenoiserModel zero_model(bool residual) {
    DenoiserModel m = DenoiserModel::make(2, 4, 1, residual);
    m.unflatten(std::vector<double>(m.parameter_count(), 0.0));
    return m;
}

}  // namespace

TEST(Cg, IdentityPlusIdentityHalves) {
    const CMatrix b = oracle::random_complex(4, 3, 1);
    const CgResult r = cg_solve([](const CMatrix& x) { return CMatrix(2.0 * x); }, b, 1, 0.0);
    EXPECT_LE(frobenius_relative_error(r.solution, b / 2.0), 1e-15);
    EXPECT_EQ(r.iterations, 1);
}

TEST(Cg, ZeroRhs) {
    const CgResult r = cg_solve([](const CMatrix& x) { return x; }, CMatrix::Zero(3, 3), 5, 1e-10);
    EXPECT_EQ(r.solution.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(r.iterations, 0);
}

TEST(Cg, MatchesDenseSolve) {
    std::mt19937_64 rng(3);
    for (int d : {4, 16, 33, 64}) {
        // Random unitary basis with d distinct eigenvalues spread over [1, 4].
        const Eigen::HouseholderQR<Eigen::MatrixXcd> qr(Eigen::MatrixXcd(oracle::random_complex(d, d, rng())));
        const Eigen::MatrixXcd q = qr.householderQ();
        Eigen::VectorXd ev(d);
        for (int i = 0; i < d; ++i) ev(i) = 1.0 + 3.0 * i / std::max(1, d - 1);
        const Eigen::MatrixXcd spd = q * ev.cast<cdouble>().asDiagonal() * q.adjoint();
        const CMatrix rhs = oracle::random_complex(d, 1, rng());
        const LinearOperator op = [&](const CMatrix& x) { return CMatrix(spd * x); };
        const CgResult r = cg_solve(op, rhs, d, 0.0);
        const Eigen::VectorXcd direct = spd.ldlt().solve(Eigen::VectorXcd(rhs));
        EXPECT_LE((Eigen::VectorXcd(r.solution) - direct).norm() / direct.norm(), 1e-8) << "d=" << d;
        EXPECT_LE(r.relative_residual, 1e-12) << "d=" << d;
    }
}

TEST(Cg, BreakdownOnIndefiniteOperator) {
    const LinearOperator neg = [](const CMatrix& x) { return CMatrix(-x); };
    EXPECT_THROW(cg_solve(neg, oracle::random_complex(3, 3, 2), 5, 1e-12), CgBreakdown);
    EXPECT_THROW(cg_solve(neg, oracle::random_complex(3, 3, 2), 0, 1e-12), InvalidArgument);
}

TEST(Cg, MeasurementMatrixNormalEquations) {
    // Physical normal equations on an 8 x 8 scene from the explicit matrix.
    SarParams p;
    const ImagingGrid g = ImagingGrid::centered(p, 8, 8);
    const Eigen::MatrixXcd h = build_measurement_matrix(p, g.slow_times(), g.fast_times(), 8, 8);
    const Eigen::MatrixXcd normal = h.adjoint() * h + 0.1 * Eigen::MatrixXcd::Identity(64, 64);
    const CMatrix s = oracle::random_complex(8, 8, 4);
    const CMatrix rhs = unvectorize(h.adjoint() * vectorize(s), 8, 8);
    const LinearOperator op = [&](const CMatrix& x) { return unvectorize(normal * vectorize(x), 8, 8); };
    const CgResult r = cg_solve(op, rhs, 200, 1e-14);
    const Eigen::VectorXcd direct = normal.ldlt().solve(vectorize(rhs));
    EXPECT_LE((vectorize(r.solution) - direct).norm() / direct.norm(), 1e-6);
}

TEST(Denoiser, ZeroWeights) {
    const CMatrix x = oracle::random_complex(6, 5, 5);
    EXPECT_EQ(denoiser_forward(zero_model(true), x), x);
    EXPECT_EQ(denoiser_forward(zero_model(false), x).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Denoiser, SingleLayerMatchesLoop) {
    DenoiserModel m = DenoiserModel::make(1, 1, 9, false, 1.0);
    std::mt19937_64 rng(10);
    std::normal_distribution<double> n(0.0, 1.0);
    for (double& b : m.layers[0].bias) b = n(rng);
    const CMatrix x = oracle::random_complex(8, 8, 11);
    const CMatrix y = denoiser_forward(m, x);
    const ConvLayer& L = m.layers[0];
    double worst = 0.0;
    for (int o = 0; o < 2; ++o)
        for (int r = 0; r < 8; ++r)
            for (int c = 0; c < 8; ++c) {
                double acc = L.bias[static_cast<std::size_t>(o)];
                for (int i = 0; i < 2; ++i)
                    for (int ky = 0; ky < 3; ++ky)
                        for (int kx = 0; kx < 3; ++kx) {
                            const int rr = r + ky - 1, cc = c + kx - 1;
                            if (rr < 0 || rr >= 8 || cc < 0 || cc >= 8) continue;
                            const double v = i == 0 ? x(rr, cc).real() : x(rr, cc).imag();
                            acc += L.w(o, i, ky, kx) * v;
                        }
                const double got = o == 0 ? y(r, c).real() : y(r, c).imag();
                worst = std::max(worst, std::abs(got - acc));
            }
    EXPECT_LE(worst, 1e-12);
}

TEST(Denoiser, ValidatesShapes) {
    DenoiserModel m = DenoiserModel::make(3, 4, 2);
    m.layers[1].in_channels = 5;
    EXPECT_THROW(m.validate(), InvalidArgument);
    DenoiserModel bad = DenoiserModel::make(2, 4, 2);
    bad.layers.front().in_channels = 3;
    EXPECT_THROW(bad.validate(), InvalidArgument);
    const DenoiserModel d = DenoiserModel::make(4, 16, 3);
    EXPECT_EQ(d.parameter_count(), (2u * 16 * 9 + 16) + 2 * (16u * 16 * 9 + 16) + (16u * 2 * 9 + 2));
    DenoiserModel copy = d;
    copy.unflatten(d.flatten());
    EXPECT_EQ(copy.flatten(), d.flatten());
}

TEST(Modl, IdentityDenoiserSmallLambdaGivesMatchedFilter) {
    System s(32, 32);
    const CMatrix echo = oracle::random_complex(32, 32, 12);
    ModlConfig cfg;
    cfg.lambda = 1e-9;
    const CMatrix out = modl_forward(echo, s.f, s.plan, zero_model(true), cfg);
    EXPECT_LE(frobenius_relative_error(out, op::image(s.f, s.plan, echo)), 1e-6);
}

TEST(Modl, ZeroDenoiserMatchesDenseSolve) {
    System s(8, 8, subsample(8, 5, 13));
    const CMatrix echo = oracle::random_complex(5, 8, 14);
    ModlConfig cfg;
    cfg.lambda = 0.3;
    cfg.unroll_count = 2;
    const CMatrix out = modl_forward(echo, s.f, s.plan, zero_model(false), cfg);
    const Eigen::MatrixXcd h = dense_of([&](const CMatrix& e) { return op::image(s.f, s.plan, e); }, 5, 8, 8);
    const Eigen::MatrixXcd normal = h * h.adjoint() + cfg.lambda * Eigen::MatrixXcd::Identity(64, 64);
    const Eigen::VectorXcd direct = normal.ldlt().solve(h * vectorize(echo));
    EXPECT_LE((vectorize(out) - direct).norm() / direct.norm(), 1e-6);
    // The dense adjoint is the inverse operator.
    const Eigen::MatrixXcd hinv = dense_of([&](const CMatrix& x) { return op::inverse(s.f, s.plan, x); }, 8, 8, 5);
    EXPECT_LE((hinv - h.adjoint()).norm() / h.norm(), 1e-12);
}

TEST(Modl, UnrollStructure) {
    System s(16, 16, subsample(16, 10, 15));
    const CMatrix echo = oracle::random_complex(10, 16, 16);
    const DenoiserModel m = DenoiserModel::make(3, 4, 17);
    ModlConfig cfg;
    cfg.unroll_count = 1;
    ModlTrace trace;
    const CMatrix one = modl_forward(echo, s.f, s.plan, m, cfg, &trace);
    const CMatrix mf = op::image(s.f, s.plan, echo);
    const CMatrix z = denoiser_forward(m, mf);
    const CMatrix manual =
        cg_solve(normal_operator(s.f, s.plan, cfg.lambda), CMatrix(mf + cfg.lambda * z), cfg.cg_iterations, cfg.cg_tolerance)
            .solution;
    EXPECT_EQ(one, manual);
    EXPECT_EQ(trace.iterates.size(), 2u);
    EXPECT_EQ(trace.denoised.size(), 1u);
    cfg.unroll_count = 2;
    EXPECT_GT(frobenius_relative_error(modl_forward(echo, s.f, s.plan, m, cfg), one), 1e-6);
}

TEST(Modl, IdentityDenoiserFixedPoint) {
    // Under full uniform sampling H H* = I, so the matched-filter image is a
    // fixed point of every unroll with the identity denoiser.
    System s(16, 16);
    const CMatrix echo = oracle::random_complex(16, 16, 19);
    ModlConfig cfg;
    cfg.lambda = 0.7;
    ModlTrace trace;
    modl_forward(echo, s.f, s.plan, zero_model(true), cfg, &trace);
    for (std::size_t k = 2; k < trace.iterates.size(); ++k)
        EXPECT_LE(frobenius_relative_error(trace.iterates[k], trace.iterates[1]), 1e-10);
}

TEST(Modl, DeterministicAndBounded) {
    std::mt19937_64 rng(20);
    for (int trial = 0; trial < 5; ++trial) {
        System s(16, 16, subsample(16, 6 + rng() % 8, rng()));
        const CMatrix echo = oracle::random_complex(static_cast<Eigen::Index>(s.plan.samples()), 16, rng());
        const DenoiserModel m = DenoiserModel::make(3, 4, rng());
        const ModlConfig cfg;
        const CMatrix a = modl_forward(echo, s.f, s.plan, m, cfg);
        EXPECT_EQ(a, modl_forward(echo, s.f, s.plan, m, cfg));
        EXPECT_TRUE(all_finite(a));
        EXPECT_LE(a.norm(), 10.0 * op::image(s.f, s.plan, echo).norm());
    }
}

TEST(Ista, ZeroPenaltyDecreasesResidual) {
    System s(16, 16, subsample(16, 10, 21));
    const EchoMatrix echo(oracle::random_complex(10, 16, 22), s.plan.positions(), s.f.fast_time_origin);
    const IstaResult r = ista_baseline(echo, s.f, s.plan, 0.0, 0.0, 50);
    for (std::size_t k = 1; k < r.objective.size(); ++k) EXPECT_LE(r.objective[k], r.objective[k - 1] * (1 + 1e-12));
    EXPECT_LT(r.objective.back(), 0.5 * r.objective.front());
}

TEST(Ista, HugePenaltyGivesZero) {
    System s(16, 16, subsample(16, 10, 23));
    const EchoMatrix echo(oracle::random_complex(10, 16, 24), s.plan.positions(), s.f.fast_time_origin);
    const IstaResult r = ista_baseline(echo, s.f, s.plan, 1e9, 0.0, 5);
    EXPECT_EQ(r.image.data.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Ista, RejectsUnstableStep) {
    System s(16, 16, subsample(16, 10, 25));
    const EchoMatrix echo(oracle::random_complex(10, 16, 26), s.plan.positions(), s.f.fast_time_origin);
    EXPECT_THROW(ista_baseline(echo, s.f, s.plan, 0.1, 10.0, 5), InvalidArgument);
}

TEST(Ista, MatchesDenseFista) {
    System s(8, 8, subsample(8, 5, 27));
    const CMatrix e = oracle::random_complex(5, 8, 28);
    const EchoMatrix echo(e, s.plan.positions(), s.f.fast_time_origin);
    const double lam = 0.5;
    const IstaResult r = ista_baseline(echo, s.f, s.plan, lam, 0.0, 500);

    // Dense FISTA on ||S - A x||^2 + lam ||x||_1 with A the inverse operator.
    const Eigen::MatrixXcd a = dense_of([&](const CMatrix& x) { return op::inverse(s.f, s.plan, x); }, 8, 8, 5);
    const Eigen::VectorXcd sv = vectorize(e);
    const double lip = 2.0 * (a.adjoint() * a).selfadjointView<Eigen::Lower>().eigenvalues().maxCoeff();
    const double step = 1.0 / lip;
    Eigen::VectorXcd x = Eigen::VectorXcd::Zero(64), y = x;
    double t = 1.0;
    auto shrink = [&](const Eigen::VectorXcd& v) {
        Eigen::VectorXcd o(v.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) {
            const double m = std::abs(v(i));
            o(i) = m > step * lam ? v(i) * ((m - step * lam) / m) : cdouble(0.0);
        }
        return o;
    };
    for (int it = 0; it < 500; ++it) {
        const Eigen::VectorXcd xn = shrink(y - step * 2.0 * (a.adjoint() * (a * y - sv)));
        const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = xn + ((t - 1.0) / tn) * (xn - x);
        x = xn;
        t = tn;
    }
    double l1 = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) l1 += std::abs(x(i));
    const double fista = (a * x - sv).squaredNorm() + lam * l1;
    EXPECT_LE(std::abs(r.objective.back() - fista), 1e-4 * std::max(1.0, fista));
}
