#pragma once

// Gaussian Free Field with covariance (sigma^2/2)(-Delta)^-1 on zero-mean
// fields, its mollifications and Cameron-Martin shifts.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "lattice.hpp"
#include "rng.hpp"

namespace srflab {

/// L1 regime bound on sigma (2 sqrt(pi)).
inline const double kSigmaL1 = 2.0 * std::sqrt(std::numbers::pi);
/// L2 regime bound on sigma (sqrt(2 pi)).
inline const double kSigmaL2 = std::sqrt(2.0 * std::numbers::pi);

inline void require_sigma(double sigma)
{
    if (!(sigma >= 0.0)) {
        throw ConfigError("sigma < 0");
    }
    if (sigma >= kSigmaL1) {
        throw ConfigError("sigma >= 2*sqrt(pi)");
    }
}

enum class MollifierScheme {
    /// No smoothing beyond the grid itself (multiplier 1).
    lattice,
    /// Heat kernel at time eps^2/2: multiplier exp(-eps^2 lam / 2).
    heat,
    /// Circle average of radius eps: multiplier J0(eps sqrt(lam)).
    circle,
};

inline std::string to_string(MollifierScheme s)
{
    switch (s) {
    case MollifierScheme::lattice: return "lattice";
    case MollifierScheme::heat: return "heat";
    case MollifierScheme::circle: return "circle";
    }
    return "?";
}

inline MollifierScheme mollifier_scheme_from_string(const std::string& s)
{
    if (s == "lattice") return MollifierScheme::lattice;
    if (s == "heat") return MollifierScheme::heat;
    if (s == "circle") return MollifierScheme::circle;
    throw ConfigError("unknown mollifier scheme '" + s + "'");
}

/// Regularization at scale eps (Euclidean length; the fundamental domain
/// of the square torus has side 1).
struct Mollifier {
    MollifierScheme scheme = MollifierScheme::heat;
    double eps = 0.0;

    static Mollifier lattice() { return {MollifierScheme::lattice, 0.0}; }
    static Mollifier heat(double eps) { return {MollifierScheme::heat, eps}; }
    static Mollifier circle(double eps) { return {MollifierScheme::circle, eps}; }

    /// Nominal scale: eps, or the grid spacing for the lattice scheme.
    double scale(const TorusGeometry& g) const noexcept
    {
        return scheme == MollifierScheme::lattice ? 1.0 / g.n() : eps;
    }

    /// Throws ConfigError when eps is not resolvable on g (eps < 2/N).
    void validate(const TorusGeometry& g) const
    {
        if (scheme == MollifierScheme::lattice) {
            return;
        }
        if (!(eps >= 2.0 / g.n())) {
            throw ConfigError("mollifier eps < 2/N (scale not resolvable on the grid)");
        }
    }

    double multiplier(double lam) const noexcept
    {
        switch (scheme) {
        case MollifierScheme::lattice: return 1.0;
        case MollifierScheme::heat: return std::exp(-0.5 * eps * eps * lam);
        case MollifierScheme::circle: return std::cyl_bessel_j(0.0, eps * std::sqrt(lam));
        }
        return 1.0;
    }

    /// Multiplier for every half-spectrum mode of g.
    std::vector<double> multipliers(const TorusGeometry& g) const
    {
        validate(g);
        const auto lam = g.eigenvalues();
        std::vector<double> m(lam.size());
        for (std::size_t i = 0; i < m.size(); ++i) {
            m[i] = multiplier(lam[i]);
        }
        return m;
    }
};

/// phi_eps: the mollified field. The mean is unchanged.
inline ScalarField mollify(const ScalarField& phi, const Mollifier& m)
{
    m.validate(*phi.geometry());
    if (m.scheme == MollifierScheme::lattice) {
        return phi;
    }
    return apply_multiplier(phi, [&](double lam, std::size_t) { return m.multiplier(lam); });
}

/// Pointwise variance of the mollified zero-mean GFF,
/// sum_{k != 0} sigma^2 m_k^2 / (2 lam_k Im tau). x-independent on the torus.
inline double regularized_variance(const TorusGeometry& g, double sigma, const Mollifier& m)
{
    m.validate(g);
    const auto lam = g.eigenvalues();
    const auto w = g.mode_weights();
    double acc = 0.0;
    for (std::size_t i = 1; i < lam.size(); ++i) {
        const double mk = m.multiplier(lam[i]);
        acc += w[i] * mk * mk / lam[i];
    }
    return sigma * sigma * acc / (2.0 * g.area());
}

/// Sampler of the zero-mean GFF. Mode k != 0 of a sample has
/// E|phi_k|^2 = sigma^2 / (2 lam_k Im tau), which is sigma^2/(2 lam_k) on
/// the default square torus.
class GffSampler {
public:
    GffSampler(Geometry geometry, double sigma, std::uint64_t seed = 0)
        : geometry_(std::move(geometry)), sigma_(sigma), seed_(seed)
    {
        require_sigma(sigma);
        const auto lam = geometry_->eigenvalues();
        filter_.resize(lam.size());
        // White noise w has E|w_k|^2 = N^-2; scale it to the target variance.
        const double n = geometry_->n();
        filter_[0] = 0.0;
        for (std::size_t i = 1; i < lam.size(); ++i) {
            filter_[i] = n * sigma / std::sqrt(2.0 * lam[i] * geometry_->area());
        }
    }

    const Geometry& geometry() const noexcept { return geometry_; }
    double sigma() const noexcept { return sigma_; }
    std::uint64_t seed() const noexcept { return seed_; }

    /// Target standard deviation sqrt(E|phi_k|^2) of half-spectrum mode i.
    double mode_sd(std::size_t i) const noexcept { return filter_[i] / geometry_->n(); }

    /// Draws into a half spectrum (mode 0 is zero).
    void sample_spectrum(Stream& rng, Spectrum& out) const
    {
        thread_local std::vector<double> white;
        white.resize(geometry_->cells());
        for (auto& w : white) {
            w = rng.normal();
        }
        geometry_->forward(white, out.coeffs);
        for (std::size_t i = 0; i < filter_.size(); ++i) {
            out.coeffs[i] *= filter_[i];
        }
    }

    ScalarField sample(Stream& rng) const
    {
        Spectrum s(geometry_);
        sample_spectrum(rng, s);
        return field_of(s);
    }

    /// Sample number `index` of replica `replica`; bitwise reproducible.
    ScalarField sample(std::uint64_t index, std::uint64_t replica = 0) const
    {
        Stream rng({seed_, replica, index});
        return sample(rng);
    }

private:
    Geometry geometry_;
    double sigma_;
    std::uint64_t seed_;
    std::vector<double> filter_;
};

/// Cameron-Martin shift phi + t h.
inline ScalarField cm_shift(const ScalarField& phi, const ScalarField& h, double t)
{
    require_same(*phi.geometry(), *h.geometry());
    ScalarField out = h;
    out *= t;
    out += phi;
    return out;
}

/// Log Radon-Nikodym weight of the shifted law against the GFF:
/// (2t/sigma^2) <phi, h>_H - (t^2/sigma^2) ||h||_H^2.
inline double cm_log_weight(const ScalarField& phi, const ScalarField& h, double t, double sigma)
{
    if (t == 0.0) {
        return 0.0;
    }
    const Spectrum hs = spectrum_of(h);
    const Spectrum ps = spectrum_of(phi);
    return (2.0 * t / (sigma * sigma)) * grad_inner(ps, hs) - (t * t / (sigma * sigma)) * grad_inner(hs, hs);
}

} // namespace srflab
