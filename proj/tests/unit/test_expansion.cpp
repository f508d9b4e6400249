#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "srflab/expansion.hpp"
#include "srflab/gff.hpp"
#include "srflab/stats.hpp"

using namespace srflab;

namespace {

ExpansionConfig config(double lambda, double dt, double horizon)
{
    ExpansionConfig c;
    c.lambda = lambda;
    c.dt = dt;
    c.horizon = horizon;
    c.seed = 21;
    return c;
}

double max_abs_diff(const ScalarField& a, const ScalarField& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.value(i) - b.value(i)));
    return m;
}

} // namespace

TEST(Phi0, ConstantsAreStationaryOrDriftByLambda)
{
    auto g = TorusGeometry::make(16);
    auto traj = solve_phi0(ScalarField::constant(g, 0.3), config(0.0, 1e-3, 0.1));
    EXPECT_LT(max_abs_diff(traj.final_field(), ScalarField::constant(g, 0.3)), 1e-14);
    traj = solve_phi0(ScalarField::constant(g, 0.3), config(2.0, 1e-3, 0.1));
    EXPECT_LT(max_abs_diff(traj.final_field(), ScalarField::constant(g, 0.3 - 2.0 * 0.1)), 1e-13);
}

TEST(Phi0, SingleModeEnergyDecaysToFlat)
{
    auto g = TorusGeometry::make(32);
    const auto init = 0.3 * mode_field(g, 1, 0);
    const double t = 1.5 * decay_time(init);
    auto cfg = config(0.0, t / 1000.0, t);
    const auto traj = solve_phi0(init, cfg);
    ASSERT_FALSE(traj.blown_up);
    double prev = grad_inner(init, init);
    for (std::size_t k = 1; k < traj.fields.size(); ++k) {
        const double e = grad_inner(traj.fields[k], traj.fields[k]);
        ASSERT_LT(e, prev) << "step " << k;
        prev = e;
    }
    EXPECT_LE(std::sqrt(prev / grad_inner(init, init)), 0.01);
    // The area is conserved, so the flat limit is (1/2) log(mean e^{2 phi}).
    const double limit = 0.5 * std::log(integrate(init.map([](double x) { return std::exp(2.0 * x); })));
    EXPECT_NEAR(traj.final_field().mean(), limit, 1e-3);
}

TEST(Phi1, ZeroNoiseZeroDataStaysZero)
{
    auto g = TorusGeometry::make(16);
    auto cfg = config(0.5, 1e-3, 0.05);
    const auto p0 = solve_phi0(0.2 * mode_field(g, 1, 1), cfg);
    const auto p1 = solve_phi1(p0, cfg, 0, nullptr, 0.0);
    for (const auto& f : p1.fields) {
        for (std::size_t i = 0; i < f.size(); ++i) ASSERT_EQ(f.value(i), 0.0);
    }
}

TEST(Phi1, LinearInDataAndNoise)
{
    auto g = TorusGeometry::make(16);
    auto cfg = config(0.3, 1e-3, 0.05);
    const auto p0 = solve_phi0(0.2 * mode_field(g, 1, 1) + 0.1 * mode_field(g, 2, 0), cfg);
    const auto init = GffSampler(g, 0.5, 2).sample(0);
    const auto data_only = solve_phi1(p0, cfg, 4, &init, 0.0);
    const auto noise_only = solve_phi1(p0, cfg, 4, nullptr, 1.0);
    const auto both = solve_phi1(p0, cfg, 4, &init, 1.0);
    EXPECT_LT(max_abs_diff(both.final_field(), data_only.final_field() + noise_only.final_field()), 1e-10);
}

TEST(Phi1, TimeGridMismatchRejected)
{
    auto g = TorusGeometry::make(16);
    auto cfg = config(0.0, 1e-3, 0.05);
    const auto p0 = solve_phi0(ScalarField::constant(g, 0.0), cfg);
    cfg.horizon = 0.06;
    EXPECT_THROW(solve_phi1(p0, cfg, 0), GeometryMismatch);
}

TEST(Phi1, FlatBackgroundGivesHeatEquationStationaryModes)
{
    auto g = TorusGeometry::make(16);
    auto cfg = config(0.0, 1e-4, 1.0);
    const Phi1Stepper st(g, cfg);
    const auto zero = ScalarField(g);
    ScalarField psi(g);
    std::vector<double> eta;
    const std::vector<std::pair<int, int>> modes = {{1, 0}, {0, 1}, {1, 1}, {-1, 1}, {2, 0}, {0, 2}, {2, 1}, {1, 2}};
    std::vector<double> acc(modes.size(), 0.0);
    int samples = 0;
    for (std::size_t k = 0; k < 300000; ++k) {
        st.draw_noise(0, k, eta);
        psi = st.step(psi, zero, zero, eta);
        if (k >= 2000 && k % 100 == 0) {
            const auto sp = spectrum_of(psi);
            for (std::size_t m = 0; m < modes.size(); ++m) {
                acc[m] += std::norm(sp.coeffs[g->mode_index(modes[m].first, modes[m].second)]);
            }
            ++samples;
        }
    }
    for (std::size_t m = 0; m < modes.size(); ++m) {
        // Unit-sigma heat equation: E|phi1_k|^2 = 1 / (2 lambda_k).
        const double target = 1.0 / (2.0 * mode_eigenvalue(*g, modes[m].first, modes[m].second));
        EXPECT_NEAR(acc[m] / samples / target, 1.0, 0.10) << modes[m].first << "," << modes[m].second;
    }
}

TEST(Expansion, CoupledErrorShrinksFasterThanSigmaCubed)
{
    auto g = TorusGeometry::make(16);
    auto cfg = config(0.5, 1e-3, 0.05);
    const auto init = 0.3 * mode_field(g, 1, 0) + 0.2 * mode_field(g, 1, 1, 0.5);
    const auto p0 = solve_phi0(init, cfg);
    const std::vector<double> sigmas = {0.05, 0.1, 0.2};
    std::vector<double> err(sigmas.size(), 0.0);
    const int reps = 6;
    for (int r = 0; r < reps; ++r) {
        const auto p1 = solve_phi1(p0, cfg, r);
        for (std::size_t j = 0; j < sigmas.size(); ++j) {
            const auto ps = solve_srf_coupled(init, cfg, sigmas[j], r);
            err[j] += expansion_error(ps.final_field(), p0.final_field(), p1.final_field(), sigmas[j]) / reps;
        }
    }
    EXPECT_GT(loglog_slope(sigmas, err), 3.5);
}
