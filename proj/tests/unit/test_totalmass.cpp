#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "srflab/conventions.hpp"
#include "srflab/stats.hpp"
#include "srflab/totalmass.hpp"

using namespace srflab;

namespace {

MassSdeConfig phi_cfg(double sigma, double lambda, double a0, double dt, double horizon)
{
    MassSdeConfig c;
    c.convention = Convention::phi;
    c.coupling = sigma;
    c.decay = lambda;
    c.a0 = a0;
    c.dt = dt;
    c.horizon = horizon;
    return c;
}

MassSdeConfig x_cfg(double gamma, double alpha_bar, double a0, double dt, double horizon)
{
    MassSdeConfig c;
    c.convention = Convention::x;
    c.coupling = gamma;
    c.alpha_bar = alpha_bar;
    c.a0 = a0;
    c.dt = dt;
    c.horizon = horizon;
    return c;
}

// RK4 for v' = -(c^2/2) v^2 - k v.
double riccati_rk4(double u, double t, double k, double c)
{
    const double q = 0.5 * c * c;
    auto f = [&](double v) { return -q * v * v - k * v; };
    const int n = 20000;
    const double h = t / n;
    double v = u;
    for (int i = 0; i < n; ++i) {
        const double k1 = f(v);
        const double k2 = f(v + 0.5 * h * k1);
        const double k3 = f(v + 0.5 * h * k2);
        const double k4 = f(v + h * k3);
        v += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    }
    return v;
}

} // namespace

TEST(Conventions, BoundaryCoincidencesAndRoundTrip)
{
    EXPECT_NEAR(to_phi({2.0, 0.0}).sigma, 2 * std::sqrt(std::numbers::pi), 1e-15);
    EXPECT_NEAR(to_phi({std::sqrt(2.0), 0.0}).sigma, std::sqrt(2 * std::numbers::pi), 1e-15);
    for (double gamma : {0.1, 0.7, 1.0, 1.9}) {
        for (double mu : {0.0, 0.3, 2.0}) {
            const auto back = to_x(to_phi({gamma, mu}));
            EXPECT_NEAR(back.gamma, gamma, 1e-14);
            EXPECT_NEAR(back.mu, mu, 1e-14);
        }
    }
    EXPECT_THROW(to_phi({0.0, 1.0}), ConfigError);
    EXPECT_THROW(to_x({-1.0, 1.0}), ConfigError);
}

TEST(MassSdeConfig, ConventionsAgreeAfterTimeChange)
{
    // Same physical diffusion in both pictures: X-picture coefficients equal
    // phi-picture ones divided by 2 pi (drift) and sqrt(2 pi) (noise).
    const auto phi = phi_cfg(1.3, 0.4, 1.0, 1e-3, 1.0);
    auto x = phi;
    x.convention = Convention::x;
    x.coupling = to_x({1.3, 0.4}).gamma;
    x.decay = to_x({1.3, 0.4}).mu;
    const double tp = 2 * std::numbers::pi;
    EXPECT_NEAR(phi.drift_rate(), tp * x.drift_rate(), 1e-13);
    EXPECT_NEAR(phi.diffusion(), std::sqrt(tp) * x.diffusion(), 1e-13);
    EXPECT_NEAR(phi.delta(), x.delta(), 1e-13);
    auto phi_ins = phi;
    phi_ins.alpha_bar = 0.3;
    auto x_ins = x;
    x_ins.alpha_bar = 0.3;
    EXPECT_NEAR(phi_ins.drift_constant(), tp * x_ins.drift_constant(), 1e-13);
    EXPECT_NEAR(4 * phi_ins.drift_constant() / (phi_ins.diffusion() * phi_ins.diffusion()), phi_ins.delta(), 1e-13);
}

TEST(ClassifyBoundary, Examples)
{
    auto c = x_cfg(1.0, 0.5, 1.0, 1e-3, 1.0);
    EXPECT_NEAR(c.delta(), 1.0, 1e-15);
    EXPECT_EQ(classify_boundary(c), BoundaryClass::hits_zero_continuable);
    c.alpha_bar = 0.0;
    EXPECT_EQ(c.delta(), 0.0);
    EXPECT_EQ(classify_boundary(c), BoundaryClass::absorbing);
    // Sphere-like input: Q = 2.5, alpha_bar = 2Q + 1 gives alpha_bar - 2Q = 1.
    c.chi = 2.0;
    c.alpha_bar = 2 * c.q() + 1;
    EXPECT_NEAR(c.delta(), 2.0, 1e-14);
    EXPECT_EQ(classify_boundary(c), BoundaryClass::never_hits_zero);
    EXPECT_EQ(classify_boundary(3.0), BoundaryClass::never_hits_zero);
    EXPECT_EQ(classify_boundary(-1.0), BoundaryClass::absorbing);
}

TEST(SeibergCheck, Examples)
{
    const double q = background_charge(1.0);
    auto r = seiberg_check(1.0, {q});
    EXPECT_FALSE(r.all_local_ok);
    r = seiberg_check(1.0, {0.1});
    EXPECT_TRUE(r.all_local_ok);
    EXPECT_TRUE(r.global_ok);
    EXPECT_NEAR(r.delta, 0.2, 1e-15);
    r = seiberg_check(1.0, {});
    EXPECT_FALSE(r.global_ok);
    EXPECT_EQ(r.delta, 0.0);
}

TEST(SimulateMass, SmallNoiseFollowsOde)
{
    const auto c = phi_cfg(1e-6, 1.0, 2.0, 1e-4, 1.0);
    const auto p = simulate_mass(c, 20, 3, {0.5, 1.0});
    for (std::size_t i = 0; i < p.paths(); ++i) {
        EXPECT_NEAR(p.recorded_at(i, 0), 2.0 * std::exp(-1.0), 1e-4);
        EXPECT_NEAR(p.recorded_at(i, 1), 2.0 * std::exp(-2.0), 1e-4);
        EXPECT_FALSE(std::isfinite(p.hit_time[i]));
    }
}

TEST(SimulateMass, DeterministicAndNonnegative)
{
    const auto c = phi_cfg(1.0, 0.5, 1.0, 1e-3, 2.0);
    const auto a = simulate_mass(c, 200, 9, {0.5, 1.0, 2.0});
    const auto b = simulate_mass(c, 200, 9, {0.5, 1.0, 2.0});
    EXPECT_EQ(a.recorded, b.recorded);
    EXPECT_EQ(a.hit_time, b.hit_time);
    for (double v : a.recorded) EXPECT_GE(v, 0.0);
    for (double v : a.min_value) EXPECT_GE(v, 0.0);
}

TEST(SimulateMass, HittingLawWithoutDrift)
{
    const auto c = phi_cfg(1.0, 0.0, 1.0, 1e-4, 5.0);
    const auto p = simulate_mass(c, 3000, 21);
    const auto ks = ks_one_sample(p.hit_time, [&](double t) { return hitting_cdf(c, t); }, c.horizon);
    EXPECT_GT(ks.p_value, 0.01) << "D=" << ks.distance;
    EXPECT_NEAR(hitting_cdf(c, 2.0), std::exp(-1.0 / 4.0), 1e-15);
    // delta = 0 is the BESQ(0) case of the Gamma form, with and without decay.
    auto d = c;
    for (double lambda : {0.0, 0.8}) {
        d.decay = lambda;
        for (double t : {0.3, 1.0, 4.0}) EXPECT_NEAR(besq_hitting_cdf(d, t), hitting_cdf(d, t), 1e-13);
    }
}

TEST(LaplaceOracle, TrivialCasesAndRiccati)
{
    for (double lambda : {0.0, 0.7}) {
        const auto c = phi_cfg(0.9, lambda, 1.3, 1e-3, 1.0);
        EXPECT_EQ(laplace_oracle(c, 0.0, 0.4), 1.0);
        EXPECT_NEAR(laplace_oracle(c, 2.0, 0.0), std::exp(-2.6), 1e-15);
        for (double u : {0.5, 3.0}) {
            for (double t : {0.1, 1.0}) {
                const double v = riccati_rk4(u, t, c.drift_rate(), c.diffusion());
                EXPECT_NEAR(laplace_oracle(c, u, t), std::exp(-1.3 * v), 1e-10);
            }
        }
    }
    auto ins = phi_cfg(1.0, 0.0, 1.0, 1e-3, 1.0);
    ins.alpha_bar = 0.2;
    EXPECT_THROW(laplace_oracle(ins, 1.0, 1.0), ConfigError);
}

TEST(LaplaceOracle, MatchesMonteCarlo)
{
    for (double lambda : {0.0, 1.0}) {
        const auto c = phi_cfg(1.0, lambda, 1.0, 1e-4, 0.5);
        const auto p = simulate_mass(c, 10000, 40 + static_cast<std::uint64_t>(lambda), {0.25, 0.5});
        for (std::size_t j = 0; j < 2; ++j) {
            for (double u : {0.5, 2.0}) {
                std::vector<double> e(p.paths());
                for (std::size_t i = 0; i < e.size(); ++i) e[i] = std::exp(-u * p.recorded_at(i, j));
                const auto r = mean_se(e);
                EXPECT_NEAR(r.mean, laplace_oracle(c, u, p.record_times[j]), 3 * r.se) << "lambda=" << lambda << " u=" << u;
            }
        }
    }
}

TEST(SimulateMass, PositiveDecayAbsorbsEverything)
{
    const auto c = phi_cfg(1.0, 1.0, 1.0, 1e-3, 10.0);
    const auto p = simulate_mass(c, 2000, 5);
    EXPECT_GT(hitting_cdf(c, 10.0), 0.999);
    EXPECT_GE(p.hit_fraction(), 0.995);
    EXPECT_EQ(p.stayed_at_zero, static_cast<std::size_t>(std::llround(p.hit_fraction() * 2000)));
}

TEST(SimulateMass, CoupledComparisonInDecay)
{
    const auto lo = phi_cfg(0.8, 0.2, 1.0, 1e-4, 1.0);
    auto hi = lo;
    hi.decay = 1.5;
    const std::vector<double> times = {0.1, 0.25, 0.5, 1.0};
    const auto a = simulate_mass(lo, 500, 77, times);
    const auto b = simulate_mass(hi, 500, 77, times);
    std::size_t violations = 0;
    for (std::size_t i = 0; i < a.recorded.size(); ++i) violations += b.recorded[i] > a.recorded[i] + 1e-9 ? 1 : 0;
    EXPECT_EQ(violations, 0u);
}

TEST(SimulateMass, BesqClassesAndHittingLaw)
{
    // delta = 3: the implicit scheme keeps paths positive.
    const auto d3 = x_cfg(1.0, 1.5, 0.5, 1e-3, 5.0);
    EXPECT_NEAR(d3.delta(), 3.0, 1e-15);
    const auto p3 = simulate_mass(d3, 2000, 1);
    EXPECT_EQ(p3.hit_fraction(), 0.0);
    for (double v : p3.min_value) EXPECT_GT(v, 0.0);

    // delta = 1: hitting law against the Gamma form.
    const auto d1 = x_cfg(1.0, 0.5, 0.5, 1e-4, 5.0);
    const auto p1 = simulate_mass(d1, 3000, 2);
    const auto ks = ks_one_sample(p1.hit_time, [&](double t) { return besq_hitting_cdf(d1, t); }, d1.horizon);
    EXPECT_GT(ks.p_value, 0.01) << "D=" << ks.distance;
    EXPECT_NEAR(besq_hitting_cdf(d1, 5.0), std::erfc(std::sqrt(0.1)), 1e-12);

    // delta = -1 with mu = 2: survival by T = 5 has probability ~2e-7.
    auto dm = x_cfg(1.0, -0.5, 0.5, 1e-3, 5.0);
    dm.decay = 2.0;
    EXPECT_GT(besq_hitting_cdf(dm, 5.0), 1.0 - 1e-6);
    const auto pm = simulate_mass(dm, 2000, 3, {5.0});
    EXPECT_EQ(pm.hit_fraction(), 1.0);
    EXPECT_EQ(pm.stayed_at_zero, 2000u);
    for (double v : pm.recorded) EXPECT_EQ(v, 0.0);
}

TEST(MassSdeConfig, Validation)
{
    auto c = phi_cfg(4.0, 0.0, 1.0, 1e-3, 1.0);
    EXPECT_THROW(c.validate(), ConfigError);
    c = phi_cfg(1.0, 0.0, 0.0, 1e-3, 1.0);
    EXPECT_THROW(c.validate(), ConfigError);
}
