#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "srflab/gff.hpp"
#include "srflab/gmc.hpp"
#include "srflab/verify.hpp"

using namespace srflab;

namespace {

ScalarField bump_field(const Geometry& g, cplx centre, double radius)
{
    return ScalarField::from_function(g, [=, &g](cplx z) {
        const double r = g->distance(z, centre) / radius;
        return r < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - r * r)) : 0.0;
    });
}

ScalarField cosine(const Geometry& g)
{
    return ScalarField::from_function(g, [](cplx z) { return 1.0 + 0.5 * std::cos(2.0 * std::numbers::pi * z.real()); });
}

GmcMeasure sample_measure(const Geometry& g, double sigma, std::uint64_t seed)
{
    const auto phi = GffSampler(g, sigma, seed).sample(0);
    return build_gmc(phi, sigma, Mollifier::heat(1.0 / 8.0));
}

} // namespace

TEST(TestFunctional, BumpVanishesOutsideBoxAndDerivativesMatchDifferences)
{
    auto g = TorusGeometry::make(16);
    const auto G = product_bump({{0.2, 3.0}, {0.3, 2.5}, {0.1, 1.0}}, {cosine(g), bump_field(g, {0.5, 0.5}, 0.3)});
    EXPECT_TRUE(vanishes_outside_support(G, 2000, 5));
    const TestFunctional::Point x{1.1, 0.9, 0.6};
    const auto grad = G.gradient(x);
    const auto hess = G.hessian(x);
    const double t = 1e-5;
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto xp = x;
        auto xm = x;
        xp[i] += t;
        xm[i] -= t;
        EXPECT_NEAR(grad[i], (G.q(xp) - G.q(xm)) / (2.0 * t), 1e-8);
        const auto gp = G.gradient(xp);
        const auto gm = G.gradient(xm);
        for (std::size_t j = 0; j < x.size(); ++j) EXPECT_NEAR(hess[i][j], (gp[j] - gm[j]) / (2.0 * t), 1e-6);
    }
}

TEST(TestFunctional, DegenerateBoxRejected)
{
    EXPECT_THROW(product_bump({{1.0, 1.0}}, {}), ConfigError);
    EXPECT_THROW(product_bump({{0.0, 1.0}}, {}), ConfigError);
    auto g = TorusGeometry::make(8);
    EXPECT_THROW(product_bump({{0.5, 1.0}, {2.0, 1.0}}, {cosine(g)}), ConfigError);
    EXPECT_THROW(product_bump({{0.5, 1.0}}, {cosine(g)}), ConfigError);
}

TEST(Frechet, MassOnlyFunctionalAlongConstant)
{
    auto g = TorusGeometry::make(16);
    const auto M = sample_measure(g, 0.5, 1);
    const double total = M.total_mass();
    const auto G = product_bump({{0.5 * total, 2.0 * total}}, {});
    const double c = 0.7;
    const double expect = 2.0 * c * G.gradient({total})[0] * total;
    EXPECT_NEAR(frechet(G, ScalarField::constant(g, c), M), expect, 1e-13 * std::abs(expect));
    const auto outside = product_bump({{2.0 * total, 3.0 * total}}, {});
    EXPECT_EQ(frechet(outside, mode_field(g, 1, 0), M), 0.0);
}

TEST(Frechet, MatchesShiftDifferenceQuotient)
{
    auto g = TorusGeometry::make(32);
    const auto phi = GffSampler(g, 1.0, 2).sample(0);
    const auto M = build_gmc(phi, 1.0, Mollifier::heat(1.0 / 8.0));
    const double total = M.total_mass();
    const auto f1 = cosine(g);
    const double m1 = integrate(f1, M);
    const auto G = product_bump({{0.5 * total, 2.0 * total}, {0.4 * m1, 1.7 * m1}}, {f1});
    const auto h = mode_field(g, 1, 2, 0.3) + 0.5 * bump_field(g, {0.3, 0.6}, 0.25);
    const double d = frechet(G, phi, h, M);
    ASSERT_GT(std::abs(d), 1e-3);
    const double t = 1e-6;
    const double fd = (G(shifted(M, h, t)) - G(M)) / t;
    EXPECT_LE(std::abs(fd - d) / std::abs(d), 1e-6);
    // The shift formula agrees with rebuilding the chaos from phi + t h.
    const auto rebuilt = build_gmc(phi + t * h, 1.0, Mollifier::heat(1.0 / 8.0));
    EXPECT_NEAR(G(rebuilt), G(shifted(M, h, t)), 1e-12);
}

TEST(Frechet, LinearInDirection)
{
    auto g = TorusGeometry::make(16);
    const auto M = sample_measure(g, 0.8, 3);
    const double total = M.total_mass();
    const auto G = product_bump({{0.3 * total, 3.0 * total}, {0.1, 3.0}}, {cosine(g)});
    const auto h1 = mode_field(g, 1, 0);
    const auto h2 = bump_field(g, {0.2, 0.7}, 0.3);
    const double a = 1.7;
    const double b = -0.4;
    const double lhs = frechet(G, a * h1 + b * h2, M);
    const double rhs = a * frechet(G, h1, M) + b * frechet(G, h2, M);
    EXPECT_NEAR(lhs, rhs, 1e-13 * (std::abs(lhs) + 1.0));
}

TEST(Frechet, LeibnizRule)
{
    auto g = TorusGeometry::make(16);
    const auto M = sample_measure(g, 0.8, 4);
    const double total = M.total_mass();
    const auto f1 = cosine(g);
    const auto f2 = bump_field(g, {0.5, 0.5}, 0.35);
    const auto G = product_bump({{0.3 * total, 2.0 * total}, {0.2 * total, 2.0 * total}}, {f1});
    const auto H = product_bump({{0.5 * total, 3.0 * total}, {0.01, 2.0 * integrate(f2, M)}}, {f2});
    const auto GH = product(G, H);
    const auto h = mode_field(g, 0, 1, 0.2);
    const double lhs = frechet(GH, h, M);
    const double rhs = frechet(G, h, M) * H(M) + G(M) * frechet(H, h, M);
    ASSERT_GT(std::abs(lhs), 1e-6);
    EXPECT_NEAR(lhs, rhs, 1e-14 * std::abs(lhs) + 1e-15);
    EXPECT_NEAR(GH(M), G(M) * H(M), 1e-15);
}

TEST(Ibp, ConstantDirectionCancelsExactly)
{
    auto g = TorusGeometry::make(16);
    const auto G = product_bump({{0.2, 3.0}, {0.3, 2.5}}, {cosine(g)});
    IbpSettings cfg;
    cfg.sigma = 1.5;
    cfg.lambda = 1.0;
    cfg.mollifier = Mollifier::heat(1.0 / 8.0);
    cfg.samples = 2000;
    cfg.seed = 9;
    const auto r = ibp_residual(G, ScalarField::constant(g, 1.0), cfg);
    EXPECT_EQ(r.lhs, 0.0);
    EXPECT_GT(r.rhs_se, 0.0);
    EXPECT_LE(std::abs(r.rhs), 3.0 * r.rhs_se);
    EXPECT_GT(r.nodes, 0.0);
}

TEST(Ibp, GaussianCaseCatalog)
{
    // lambda = 0: the identity is the Gaussian integration by parts.
    auto g = TorusGeometry::make(16);
    const auto cases = reference_catalog(g);
    ASSERT_EQ(cases.size(), 9u);
    IbpSettings cfg;
    cfg.sigma = 1.0;
    cfg.lambda = 0.0;
    cfg.mollifier = Mollifier::heat(1.0 / 8.0);
    cfg.samples = 10000;
    cfg.seed = 21;
    for (const auto& r : ibp_residuals(cases, cfg)) {
        EXPECT_GT(r.lhs_se, 0.0) << r.id;
        EXPECT_LE(std::abs(r.z), 3.0) << r.id << " lhs " << r.lhs << " rhs " << r.rhs;
    }
}

TEST(Ibp, LiouvilleBumpFunctional)
{
    auto g = TorusGeometry::make(16);
    const auto G = product_bump({{0.2, 3.0}, {0.3, 2.5}}, {cosine(g)});
    IbpSettings cfg;
    cfg.sigma = 1.5;
    cfg.lambda = 1.0;
    cfg.mollifier = Mollifier::heat(1.0 / 8.0);
    cfg.samples = 100000;
    cfg.seed = 33;
    const auto r = ibp_residual(G, mode_field(g, 1, 0), cfg);
    // The identity is not trivially zero here.
    EXPECT_GT(std::abs(r.rhs), 5.0 * r.rhs_se);
    EXPECT_LE(std::abs(r.z), 3.0);
}

TEST(Ibp, SharedSamplesAreReproducible)
{
    auto g = TorusGeometry::make(8);
    const auto cases = reference_catalog(g);
    IbpSettings cfg;
    cfg.sigma = 0.5;
    cfg.lambda = 0.5;
    cfg.mollifier = Mollifier::heat(0.25);
    cfg.samples = 200;
    cfg.seed = 4;
    const auto a = ibp_residuals(cases, cfg);
    const auto b = ibp_residuals(cases, cfg);
    const auto single = ibp_residual(cases[4].G, cases[4].h, cfg);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].z, b[i].z);
    EXPECT_EQ(single.lhs, a[4].lhs);
    EXPECT_EQ(single.rhs, a[4].rhs);
}

namespace {

// Decoupled cells dm = -2 lambda m dt + 2 sigma sqrt(m) dB with a recorded
// Laplacian term of 0: A(f) then has drift -2 lambda A(f) and quadratic
// variation 4 sigma^2 A(f^2) by construction.
ReplicaWindows null_model(const Geometry& g, const std::vector<ScalarField>& obs, const QvSettings& q, double dt,
                          std::size_t steps, std::uint64_t replica)
{
    const std::size_t n = g->cells();
    std::vector<double> m(n, g->cell_area());
    Stream rng({77, replica, 0});
    WindowBuilder b(obs.size(), q);
    auto row = [&](std::size_t k) {
        SrfRow r;
        r.step = k;
        r.t = dt * static_cast<double>(k);
        for (std::size_t i = 0; i < obs.size(); ++i) {
            r.value.push_back(integrate(obs[i], m));
            r.square.push_back(integrate(obs[i] * obs[i], m));
            r.laplace.push_back(0.0);
            for (std::size_t j = i + 1; j < obs.size(); ++j) r.pair.push_back(integrate(obs[i] * obs[j], m));
        }
        return r;
    };
    b.add(row(0));
    for (std::size_t k = 1; k <= steps; ++k) {
        for (auto& x : m) x = std::max(0.0, x - 2.0 * q.lambda * x * dt + 2.0 * q.sigma * std::sqrt(x * dt) * rng.normal());
        b.add(row(k));
    }
    return b.finish();
}

} // namespace

TEST(QvDrift, NullModelRecoversUnitSlopes)
{
    auto g = TorusGeometry::make(8);
    const std::vector<ScalarField> obs{ScalarField::constant(g, 1.0), bump_field(g, {0.25, 0.5}, 0.2),
                                       bump_field(g, {0.75, 0.5}, 0.2), cosine(g)};
    QvSettings q;
    q.sigma = 0.25;
    q.lambda = 1.0;
    q.window = 20;
    q.bootstrap = 400;
    std::vector<ReplicaWindows> ens;
    for (std::size_t r = 0; r < 200; ++r) ens.push_back(null_model(g, obs, q, 4e-5, 2500, r));
    EXPECT_EQ(ens.front().windows.size(), 125u);
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const auto rep = qv_drift_regression(ens, obs.size(), i, q);
        EXPECT_TRUE(rep.variation.slope_ci.contains(1.0))
            << i << " [" << rep.variation.slope_ci.lo << ", " << rep.variation.slope_ci.hi << "]";
        EXPECT_TRUE(rep.variation.intercept_ci.contains(0.0)) << i;
        EXPECT_TRUE(rep.drift.origin_ci.contains(1.0))
            << i << " [" << rep.drift.origin_ci.lo << ", " << rep.drift.origin_ci.hi << "]";
    }
    // Overlapping supports: covariation against 4 sigma^2 A(f g).
    const auto cov = qv_drift_regression(ens, obs.size(), 0, 3, q);
    EXPECT_TRUE(cov.variation.slope_ci.contains(1.0));
    // Disjoint supports: predictor identically 0, realized covariation statistically 0.
    const auto disjoint = qv_drift_regression(ens, obs.size(), 1, 2, q);
    EXPECT_FALSE(std::isfinite(disjoint.variation.slope));
    EXPECT_TRUE(disjoint.variation.mean_ci.contains(0.0));
}

TEST(QvDrift, CovariationWithItselfIsQuadraticVariation)
{
    auto g = TorusGeometry::make(8);
    const std::vector<ScalarField> obs{ScalarField::constant(g, 1.0), cosine(g)};
    QvSettings q;
    q.bootstrap = 200;
    std::vector<ReplicaWindows> ens;
    for (std::size_t r = 0; r < 20; ++r) ens.push_back(null_model(g, obs, q, 1e-4, 200, r));
    const auto a = qv_drift_regression(ens, obs.size(), 1, q);
    const auto b = qv_drift_regression(ens, obs.size(), 1, 1, q);
    EXPECT_EQ(a.variation.slope, b.variation.slope);
    EXPECT_EQ(a.variation.slope_ci.lo, b.variation.slope_ci.lo);
    EXPECT_EQ(a.variation.slope_ci.hi, b.variation.slope_ci.hi);
    EXPECT_EQ(a.variation.intercept, b.variation.intercept);
}

TEST(QvDrift, InsufficientWindowsRejected)
{
    auto g = TorusGeometry::make(8);
    const std::vector<ScalarField> obs{ScalarField::constant(g, 1.0)};
    QvSettings q;
    q.window = 50;
    std::vector<ReplicaWindows> ens{null_model(g, obs, q, 1e-4, 60, 0)};
    EXPECT_THROW(qv_drift_regression(ens, 1, 0, q), ConfigError);
    EXPECT_THROW(qv_drift_regression(ens, 1, 3, q), ConfigError);
}
