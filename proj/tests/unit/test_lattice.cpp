#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "srflab/gff.hpp"
#include "srflab/lattice.hpp"
#include "srflab/stats.hpp"

using namespace srflab;

namespace {

ScalarField random_smooth(const Geometry& g, std::uint64_t idx)
{
    GffSampler s(g, 1.0, 99);
    ScalarField f = mollify(s.sample(idx), Mollifier::heat(0.15));
    f.add_constant(0.3 * static_cast<double>(idx % 5) - 0.5);
    return f;
}

// Finite-difference Laplacian oracle on a square grid; agrees with the
// spectral one to O(h^2) on smooth fields.
std::vector<double> fd_laplacian(const ScalarField& f)
{
    const int n = f.geometry()->n();
    const double h2 = 1.0 / (static_cast<double>(n) * n);
    std::vector<double> out(f.size());
    auto at = [&](int j, int l) { return f.value(((j + n) % n) * n + (l + n) % n); };
    for (int j = 0; j < n; ++j) {
        for (int l = 0; l < n; ++l) {
            out[j * n + l] = (at(j + 1, l) + at(j - 1, l) + at(j, l + 1) + at(j, l - 1) - 4 * at(j, l)) / h2;
        }
    }
    return out;
}

} // namespace

TEST(Geometry, RejectsBadGrid)
{
    EXPECT_THROW(TorusGeometry::make(48), ConfigError);
    EXPECT_THROW(TorusGeometry::make(2), ConfigError);
    EXPECT_THROW(TorusGeometry::make(16, {0.3, -1.0}), ConfigError);
}

TEST(Geometry, EigenvaluesAndArea)
{
    for (cplx tau : {cplx(0, 1), cplx(0.5, 0.8), cplx(0, 2.0)}) {
        auto g = TorusGeometry::make(16, tau);
        const auto lam = g->eigenvalues();
        EXPECT_EQ(lam[0], 0.0);
        for (std::size_t i = 1; i < lam.size(); ++i) {
            EXPECT_GT(lam[i], 0.0);
        }
        EXPECT_NEAR(g->cell_area() * g->cells(), tau.imag(), 1e-14);
        EXPECT_EQ(TorusGeometry::gauss_curvature(), 0.0);
        // Mode weights count the full spectrum.
        double total = 0.0;
        for (double w : g->mode_weights()) total += w;
        EXPECT_DOUBLE_EQ(total, 16.0 * 16.0);
    }
}

TEST(Laplacian, ConstantIsHarmonic)
{
    auto g = TorusGeometry::make(16);
    auto f = laplacian(ScalarField::constant(g, 2.5));
    EXPECT_EQ(f.mean(), 0.0);
    for (double v : f.zero_mean_values()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Laplacian, ModeIsEigenfunction)
{
    for (cplx tau : {cplx(0, 1), cplx(0.3, 1.2)}) {
        auto g = TorusGeometry::make(32, tau);
        for (auto [k1, k2] : {std::pair{1, 0}, std::pair{0, 1}, std::pair{2, -3}, std::pair{5, 4}}) {
            const auto e = mode_field(g, k1, k2, 0.4);
            const auto le = laplacian(e);
            const double lam = mode_eigenvalue(*g, k1, k2);
            const double ky = (k2 - tau.real() * k1) / tau.imag();
            EXPECT_NEAR(lam, 4 * std::numbers::pi * std::numbers::pi * (k1 * k1 + ky * ky), 1e-9);
            for (std::size_t i = 0; i < e.size(); ++i) {
                EXPECT_NEAR(le.value(i), -lam * e.value(i), 1e-9 * lam);
            }
        }
    }
}

TEST(Laplacian, IntegratesToZeroAndSelfAdjoint)
{
    auto g = TorusGeometry::make(32, {0.2, 0.9});
    for (std::uint64_t k = 0; k < 5; ++k) {
        auto f = random_smooth(g, k);
        auto h = random_smooth(g, k + 10);
        EXPECT_NEAR(integrate(laplacian(f)), 0.0, 1e-10);
        const double a = integrate(f * laplacian(h));
        const double b = integrate(h * laplacian(f));
        EXPECT_NEAR(a, b, 1e-10 * std::max(1.0, std::abs(a)));
    }
}

TEST(Laplacian, MatchesFiniteDifferencesOnSmoothField)
{
    auto g = TorusGeometry::make(128);
    auto f = ScalarField::from_function(g, [](cplx z) {
        return std::sin(2 * std::numbers::pi * z.real()) * std::cos(4 * std::numbers::pi * z.imag());
    });
    const auto fd = fd_laplacian(f);
    const auto sp = laplacian(f);
    const double scale = 20 * std::numbers::pi * std::numbers::pi;
    for (std::size_t i = 0; i < fd.size(); ++i) {
        EXPECT_NEAR(sp.value(i), fd[i], 2e-3 * scale);
    }
}

TEST(Transform, RoundTrip)
{
    auto g = TorusGeometry::make(64, {0.1, 1.3});
    auto f = random_smooth(g, 3);
    auto back = field_of(spectrum_of(f));
    EXPECT_NEAR(back.mean(), f.mean(), 1e-14);
    double scale = 0.0;
    for (double v : f.zero_mean_values()) scale = std::max(scale, std::abs(v));
    for (std::size_t i = 0; i < f.size(); ++i) {
        EXPECT_NEAR(back.value(i), f.value(i), 1e-12 * scale);
    }
}

TEST(GradInner, ConstantsAndSymmetry)
{
    auto g = TorusGeometry::make(32);
    auto c = ScalarField::constant(g, 3.0);
    for (std::uint64_t k = 0; k < 100; ++k) {
        auto f = random_smooth(g, k);
        EXPECT_NEAR(grad_inner(c, f), 0.0, 1e-12);
        EXPECT_GE(grad_inner(f, f), 0.0);
    }
    auto f = random_smooth(g, 1);
    auto h = random_smooth(g, 2);
    EXPECT_NEAR(grad_inner(f, h), grad_inner(h, f), 1e-12);
    auto shifted = f;
    shifted.add_constant(7.0);
    EXPECT_EQ(grad_inner(shifted, h), grad_inner(f, h));
}

TEST(GradInner, MatchesRealSpaceSum)
{
    for (cplx tau : {cplx(0, 1), cplx(0.4, 0.7)}) {
        auto g = TorusGeometry::make(32, tau);
        for (std::uint64_t k = 0; k < 4; ++k) {
            auto h = random_smooth(g, k);
            auto phi = random_smooth(g, k + 20);
            const auto lphi = laplacian(phi);
            // Direct cell sum of -h * Lap(phi) * cell_area.
            double direct = 0.0;
            for (std::size_t i = 0; i < h.size(); ++i) direct -= h.value(i) * lphi.value(i);
            direct *= g->cell_area();
            EXPECT_NEAR(grad_inner(h, phi), direct, 1e-10 * std::max(1.0, std::abs(direct)));
        }
    }
}

TEST(Integrate, AreaAndLinearity)
{
    auto g = TorusGeometry::make(16, {0.0, 1.7});
    EXPECT_NEAR(integrate(ScalarField::constant(g, 1.0)), 1.7, 1e-14);
    auto f = random_smooth(g, 4);
    auto h = random_smooth(g, 5);
    std::vector<double> masses(g->cells());
    for (std::size_t i = 0; i < masses.size(); ++i) masses[i] = 0.01 * (1 + i % 7);
    const double lhs = integrate(2.0 * f + (-3.0) * h, masses);
    const double rhs = 2.0 * integrate(f, masses) - 3.0 * integrate(h, masses);
    EXPECT_NEAR(lhs, rhs, 1e-12);
    EXPECT_NEAR(integrate(ScalarField::constant(g, 1.0), masses), compensated_sum(masses), 1e-13);
}

TEST(ScalarField, MeanInvariantAndMismatch)
{
    auto g = TorusGeometry::make(16);
    auto f = random_smooth(g, 0);
    double s = 0.0;
    for (double v : f.zero_mean_values()) s += v;
    EXPECT_LE(std::abs(s), kMeanTolerance * 256);
    std::vector<double> bad(256, 1.0);
    EXPECT_THROW(ScalarField::from_parts(g, 0.0, bad), std::invalid_argument);
    auto other = TorusGeometry::make(32);
    EXPECT_THROW(grad_inner(f, ScalarField::constant(other, 1.0)), GeometryMismatch);
}

TEST(Geometry, NearestCellAndDistance)
{
    auto g = TorusGeometry::make(16, {0.5, 1.0});
    for (std::size_t c : {0u, 17u, 255u, 128u}) {
        EXPECT_EQ(g->nearest_cell(g->point(c)), c);
        EXPECT_NEAR(g->distance(g->point(c), g->point(c) + cplx(1.0, 0.0)), 0.0, 1e-14);
        EXPECT_NEAR(g->distance(g->point(c), g->point(c) + g->tau()), 0.0, 1e-14);
    }
}
