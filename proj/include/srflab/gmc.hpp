#pragma once

// Gaussian multiplicative chaos A = :e^{2 phi} w0: at a fixed regularization
// scale, normalized by the exact mode-sum variance.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gff.hpp"
#include "lattice.hpp"
#include "rng.hpp"
#include "stats.hpp"

namespace srflab {

/// gamma = sigma / sqrt(pi).
inline double gamma_of_sigma(double sigma) { return sigma / std::sqrt(std::numbers::pi); }

/// Per-cell masses of the chaos measure.
struct GmcMeasure {
    Geometry geometry;
    std::vector<double> masses;
    double gamma = 0.0;
    Mollifier mollifier;

    double total_mass() const { return compensated_sum(masses); }
};

/// sum over cells of f(x) * mass(x), i.e. A(f).
inline double integrate(const ScalarField& f, const GmcMeasure& m)
{
    require_same(*f.geometry(), *m.geometry);
    return integrate(f, std::span<const double>(m.masses));
}

/// Caches the mollifier multipliers and the regularized variance for
/// repeated builds at one (geometry, sigma, mollifier).
class GmcFactory {
public:
    GmcFactory(Geometry geometry, double sigma, Mollifier mollifier)
        : geometry_(std::move(geometry)), sigma_(sigma), mollifier_(mollifier)
    {
        require_sigma(sigma);
        multipliers_ = mollifier_.multipliers(*geometry_);
        variance_ = regularized_variance(*geometry_, sigma, mollifier_);
    }

    const Geometry& geometry() const noexcept { return geometry_; }
    double sigma() const noexcept { return sigma_; }
    double gamma() const noexcept { return gamma_of_sigma(sigma_); }
    const Mollifier& mollifier() const noexcept { return mollifier_; }
    /// Var(phi_eps(x)) for the zero-mean GFF at this sigma.
    double variance() const noexcept { return variance_; }

    ScalarField mollify(const ScalarField& phi) const
    {
        require_same(*geometry_, *phi.geometry());
        if (mollifier_.scheme == MollifierScheme::lattice) {
            return phi;
        }
        return apply_multiplier(phi, [&](double, std::size_t i) { return multipliers_[i]; });
    }

    /// Masses from an already mollified field.
    GmcMeasure from_mollified(const ScalarField& phi_eps) const
    {
        require_same(*geometry_, *phi_eps.geometry());
        GmcMeasure m{geometry_, std::vector<double>(geometry_->cells()), gamma(), mollifier_};
        const double ca = geometry_->cell_area();
        const double shift = 2.0 * phi_eps.mean() - 2.0 * variance_;
        const auto zm = phi_eps.zero_mean_values();
        for (std::size_t i = 0; i < zm.size(); ++i) {
            m.masses[i] = ca * std::exp(2.0 * zm[i] + shift);
        }
        return m;
    }

    GmcMeasure build(const ScalarField& phi) const { return from_mollified(mollify(phi)); }

private:
    Geometry geometry_;
    double sigma_;
    Mollifier mollifier_;
    std::vector<double> multipliers_;
    double variance_ = 0.0;
};

/// mass(cell) = cell_area * exp(2 phi_eps(x) - 2 Var(phi_eps)), where the
/// mean of phi passes through unmollified.
inline GmcMeasure build_gmc(const ScalarField& phi, double sigma, const Mollifier& m)
{
    return GmcFactory(phi.geometry(), sigma, m).build(phi);
}

/// Max relative cell deviation between build(phi + f) and build(phi) * e^{2 f_eps}.
inline double shift_check(const ScalarField& phi, const ScalarField& f, double sigma, const Mollifier& m)
{
    const GmcFactory factory(phi.geometry(), sigma, m);
    const GmcMeasure shifted = factory.build(phi + f);
    const GmcMeasure base = factory.build(phi);
    const ScalarField fe = factory.mollify(f);
    double worst = 0.0;
    for (std::size_t i = 0; i < base.masses.size(); ++i) {
        const double expect = base.masses[i] * std::exp(2.0 * fe.value(i));
        worst = std::max(worst, std::abs(shifted.masses[i] - expect) / expect);
    }
    return worst;
}

struct MomentEstimate {
    double p = 0.0;
    double estimate = 0.0;
    Interval ci;
    std::size_t n = 0;
};

/// Largest positive moment order of the total mass that is finite.
inline double positive_moment_bound(double gamma) { return 4.0 / (gamma * gamma); }

/// Empirical p-th moment of the total masses with a bootstrap CI.
/// Throws ConfigError when p >= 4/gamma^2, where the moment diverges.
inline MomentEstimate mass_moment(std::span<const double> totals, double p, double gamma, std::uint64_t seed = 1,
                                  std::size_t n_boot = 1000)
{
    if (gamma > 0.0 && p >= positive_moment_bound(gamma)) {
        throw ConfigError("moment order p >= 4/gamma^2 (total mass moment diverges)");
    }
    if (totals.size() < 2) {
        throw std::invalid_argument("mass_moment needs at least 2 measures");
    }
    std::vector<double> powered(totals.size());
    for (std::size_t i = 0; i < totals.size(); ++i) {
        powered[i] = std::pow(totals[i], p);
    }
    MomentEstimate r;
    r.p = p;
    r.n = totals.size();
    r.estimate = compensated_sum(powered) / static_cast<double>(r.n);
    r.ci = bootstrap_interval(r.n, n_boot, seed, [&](std::span<const unsigned> w) {
        CompensatedSum s;
        for (std::size_t i = 0; i < w.size(); ++i) {
            s.add(w[i] * powered[i]);
        }
        return s.value() / static_cast<double>(r.n);
    });
    return r;
}

inline MomentEstimate mass_moment(std::span<const GmcMeasure> ensemble, double p, std::uint64_t seed = 1,
                                  std::size_t n_boot = 1000)
{
    std::vector<double> totals;
    totals.reserve(ensemble.size());
    for (const auto& m : ensemble) {
        totals.push_back(m.total_mass());
    }
    return mass_moment(totals, p, ensemble.empty() ? 0.0 : ensemble.front().gamma, seed, n_boot);
}

/// True when the CIs of two estimates (typically at eps and eps/2) overlap.
inline bool moment_stable(const MomentEstimate& a, const MomentEstimate& b)
{
    return a.ci.lo <= b.ci.hi && b.ci.lo <= a.ci.hi;
}

/// Indicator of the cells within torus distance r of the origin cell.
inline std::vector<double> disk_indicator(const TorusGeometry& g, double r)
{
    std::vector<double> k(g.cells());
    for (std::size_t i = 0; i < k.size(); ++i) {
        k[i] = g.distance(0.0, g.point(i)) <= r ? 1.0 : 0.0;
    }
    return k;
}

/// Circular convolution (sum_y k(x - y) v(y)) through the FFT.
inline std::vector<double> convolve(const TorusGeometry& g, std::span<const double> k, std::span<const double> v)
{
    std::vector<cplx> ks(g.modes());
    std::vector<cplx> vs(g.modes());
    g.forward(k, ks);
    g.forward(v, vs);
    const double scale = static_cast<double>(g.cells());
    for (std::size_t i = 0; i < ks.size(); ++i) {
        vs[i] *= ks[i] * scale;
    }
    std::vector<double> out(g.cells());
    g.inverse(vs, out);
    return out;
}

/// M(B(x, r)) for every cell x; B is the set of cells whose centers lie
/// within torus distance r of x.
inline std::vector<double> ball_masses(const GmcMeasure& m, double r)
{
    const auto& g = *m.geometry;
    auto out = convolve(g, disk_indicator(g, r), m.masses);
    // Ball masses are positive; clip FFT rounding on tiny balls.
    const double floor = std::numeric_limits<double>::min();
    for (auto& v : out) {
        v = std::max(v, floor);
    }
    return out;
}

/// Average of phi over B(x, r), for comparison with inverted fields.
inline ScalarField ball_average(const ScalarField& phi, double r)
{
    const auto& g = *phi.geometry();
    const auto k = disk_indicator(g, r);
    const double count = compensated_sum(k);
    auto avg = convolve(g, k, phi.zero_mean_values());
    for (auto& v : avg) {
        v /= count;
    }
    auto f = ScalarField::from_values(phi.geometry(), std::move(avg));
    f.add_constant(phi.mean() - f.mean());
    return f;
}

struct InversionResult {
    ScalarField field;
    /// Correlation of the estimate with the reference field, if given.
    std::optional<double> correlation;
};

/// Recovers phi from the measure: phi_hat = (1/2) log M(B(x, r)) up to an
/// additive constant, which is fixed by matching the spatial mean of the
/// reference (zero if none).
inline InversionResult invert_gmc(const GmcMeasure& m, double r, const ScalarField* reference = nullptr)
{
    const auto& g = *m.geometry;
    if (!(r >= 2.0 / g.n())) {
        throw ConfigError("probe radius < 2/N (ball below grid resolution)");
    }
    auto balls = ball_masses(m, r);
    for (auto& v : balls) {
        v = 0.5 * std::log(v);
    }
    ScalarField est = ScalarField::from_values(m.geometry, std::move(balls));
    est.add_constant((reference ? reference->mean() : 0.0) - est.mean());
    InversionResult out{std::move(est), std::nullopt};
    if (reference) {
        require_same(g, *reference->geometry());
        out.correlation = correlation(out.field.zero_mean_values(), reference->zero_mean_values());
    }
    return out;
}

/// Cov(phi_a(x), phi_b(x)) for two mollifications of the zero-mean GFF.
inline double regularized_covariance(const TorusGeometry& g, double sigma, const Mollifier& a, const Mollifier& b)
{
    const auto lam = g.eigenvalues();
    const auto w = g.mode_weights();
    double acc = 0.0;
    for (std::size_t i = 1; i < lam.size(); ++i) {
        acc += w[i] * a.multiplier(lam[i]) * b.multiplier(lam[i]) / lam[i];
    }
    return sigma * sigma * acc / (2.0 * g.area());
}

/// Draws a cell with probability proportional to its mass.
inline std::size_t sample_cell(std::span<const double> cumulative, Stream& rng)
{
    const double u = rng.uniform() * cumulative.back();
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return std::min(static_cast<std::size_t>(it - cumulative.begin()), cumulative.size() - 1);
}

/// Mean of X_eps(x) / log(1/eps) at points x drawn from M, where
/// X = (2/gamma) phi and X_eps uses the probe mollifier.
inline double thickness_statistic(const ScalarField& phi, const GmcMeasure& m, const Mollifier& probe,
                                  std::size_t n_points, Stream& rng)
{
    const ScalarField pe = mollify(phi, probe);
    std::vector<double> cum(m.masses.size());
    std::partial_sum(m.masses.begin(), m.masses.end(), cum.begin());
    CompensatedSum s;
    for (std::size_t k = 0; k < n_points; ++k) {
        s.add(pe.zero_mean_values()[sample_cell(cum, rng)]);
    }
    const double eps = probe.scale(*phi.geometry());
    return (2.0 / m.gamma) * s.value() / static_cast<double>(n_points) / std::log(1.0 / eps);
}

/// Mass-weighted sum sum_x m(x) X_eps(x) / log(1/eps) for one field, with
/// the total mass. Pooling (sum of weighted sums) / (sum of masses) over an
/// ensemble estimates the rooted mean of thickness_oracle.
struct ThicknessSample {
    double weighted = 0.0;
    double mass = 0.0;
};

inline ThicknessSample thickness_sample(const ScalarField& phi, const GmcMeasure& m, const Mollifier& probe)
{
    const ScalarField pe = mollify(phi, probe);
    const auto zm = pe.zero_mean_values();
    CompensatedSum s;
    for (std::size_t i = 0; i < zm.size(); ++i) {
        s.add(m.masses[i] * zm[i]);
    }
    const double eps = probe.scale(*phi.geometry());
    return {(2.0 / m.gamma) * s.value() / std::log(1.0 / eps), m.total_mass()};
}

/// Pooled ratio estimate with its delta-method standard error.
inline MeanSe pooled_thickness(std::span<const ThicknessSample> xs)
{
    CompensatedSum num;
    CompensatedSum den;
    for (const auto& x : xs) {
        num.add(x.weighted);
        den.add(x.mass);
    }
    MeanSe r;
    r.n = xs.size();
    r.mean = num.value() / den.value();
    std::vector<double> resid(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        resid[i] = xs[i].weighted - r.mean * xs[i].mass;
    }
    const auto e = mean_se(resid);
    r.sd = e.sd;
    r.se = e.se / (den.value() / static_cast<double>(xs.size()));
    return r;
}

/// Exact expectation of the pooled thickness ratio over the GFF and M-sampling:
/// under the rooted measure phi_probe(x) has mean 2 Cov(phi_probe, phi_meas).
inline double thickness_oracle(const TorusGeometry& g, double sigma, const Mollifier& measure, const Mollifier& probe)
{
    const double gamma = gamma_of_sigma(sigma);
    return (2.0 / gamma) * 2.0 * regularized_covariance(g, sigma, measure, probe) / std::log(1.0 / probe.scale(g));
}

/// A_eps(f) on a dyadic schedule and successive absolute differences.
struct CauchyDiagnostic {
    std::vector<double> eps;
    std::vector<double> values;
    std::vector<double> increments;
};

inline CauchyDiagnostic cauchy_diagnostic(const ScalarField& phi, const ScalarField& f, double sigma,
                                          MollifierScheme scheme, double eps0, int levels)
{
    CauchyDiagnostic d;
    double eps = eps0;
    for (int k = 0; k < levels; ++k, eps *= 0.5) {
        const Mollifier m{scheme, eps};
        d.eps.push_back(eps);
        d.values.push_back(integrate(f, build_gmc(phi, sigma, m)));
        if (k > 0) {
            d.increments.push_back(std::abs(d.values[k] - d.values[k - 1]));
        }
    }
    return d;
}

} // namespace srflab
