#pragma once

// Small-noise expansion phi = phi0 + sigma phi1 + O(sigma^2): the deterministic
// Ricci flow phi0 and its linear fluctuation phi1, stepped with the same
// variable-coefficient implicit scheme as the srf stepper (linear increment,
// coefficients e^{-2 phi_eps}), so that phi1 is its exact linearization.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "gff.hpp"
#include "lattice.hpp"
#include "srf.hpp"

namespace srflab {

struct ExpansionConfig {
    double lambda = 0.0;
    double dt = 1e-4;
    double horizon = 0.05;
    int order = 1;
    Mollifier mollifier = Mollifier::lattice();
    double blowup_guard = 60.0;
    double solver_tolerance = 1e-12;
    std::uint64_t seed = 0;

    std::size_t steps() const { return static_cast<std::size_t>(std::llround(horizon / dt)); }

    void validate(const TorusGeometry& g) const
    {
        if (!(lambda >= 0.0)) throw ConfigError("lambda >= 0 required");
        if (!(dt > 0.0) || !(horizon >= dt)) throw ConfigError("0 < dt <= T required");
        if (order != 0 && order != 1) throw ConfigError("expansion order must be 0 or 1");
        mollifier.validate(g);
    }

    /// The srf configuration whose sigma -> 0 expansion this computes.
    SrfConfig srf(double sigma) const
    {
        SrfConfig c;
        c.sigma = sigma;
        c.lambda = lambda;
        c.dt = dt;
        c.refresh = dt;
        c.horizon = horizon;
        c.mollifier = mollifier;
        c.increment = SrfIncrement::linear;
        c.imex = ImexForm::variable_implicit;
        c.coefficients = Coefficients::raw;
        c.blowup_guard = blowup_guard;
        c.seed = seed;
        c.solver_tolerance = solver_tolerance;
        c.a_min = std::numeric_limits<double>::min();
        return c;
    }
};

/// Field at every step 0..n.
struct FieldTrajectory {
    double dt = 0.0;
    std::vector<ScalarField> fields;
    bool blown_up = false;

    double time(std::size_t k) const { return dt * static_cast<double>(k); }
    const ScalarField& final_field() const { return fields.back(); }
};

/// d phi0 = e^{-2 phi0} Lap phi0 - lambda.
inline FieldTrajectory solve_phi0(const ScalarField& phi_init, const ExpansionConfig& cfg)
{
    cfg.validate(*phi_init.geometry());
    const SrfStepper st(phi_init.geometry(), cfg.srf(0.0));
    SrfState s = st.init(phi_init);
    FieldTrajectory out{cfg.dt, {s.phi}, false};
    const std::vector<double> zero(phi_init.size(), 0.0);
    for (std::size_t k = 0; k < cfg.steps(); ++k) {
        st.step(s, zero);
        if (s.blown_up) {
            out.blown_up = true;
            break;
        }
        out.fields.push_back(s.phi);
    }
    return out;
}

/// d phi1 = e^{-2 phi0} Lap phi1 - 2 e^{-2 phi0} phi1 Lap phi0 + e^{-phi0} xi,
/// discretized as the derivative in sigma of the srf step at sigma = 0:
///   (a - dt Lap) w = dt Lap phi1 - 2 a phi1_eps (v0 + lambda dt) + e^{phi0_eps} sqrt(dt/cell) eta
/// with a = e^{2 phi0_eps} and v0 = phi0' - phi0. The noise of step k is
/// the srf noise of (seed, replica, k), so the two are coupled.
class Phi1Stepper {
public:
    Phi1Stepper(Geometry geometry, const ExpansionConfig& cfg)
        : geometry_(std::move(geometry)), cfg_(cfg), srf_(geometry_, cfg.srf(1.0)), mollifier_(geometry_, 0.0, cfg.mollifier)
    {
        cfg_.validate(*geometry_);
    }

    /// phi1 at step k+1 from phi1 at step k, phi0 at steps k and k+1, and
    /// the cell normals eta scaled by eta_scale (0 for the noiseless flow).
    ScalarField step(const ScalarField& psi, const ScalarField& p0, const ScalarField& p1, std::span<const double> eta,
                     double eta_scale = 1.0) const
    {
        const auto& g = *geometry_;
        const std::size_t n = g.cells();
        const double dt = cfg_.dt;
        const double noise = eta_scale * std::sqrt(dt / g.cell_area());
        const ScalarField p0e = mollifier_.mollify(p0);
        const ScalarField psie = mollifier_.mollify(psi);
        const auto lap = laplacian(psi);
        std::vector<double> a(n);
        std::vector<double> rhs(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double e = std::exp(p0e.value(i));
            a[i] = e * e;
            const double v0 = p1.value(i) - p0.value(i);
            rhs[i] = dt * lap.value(i) - 2.0 * a[i] * psie.value(i) * (v0 + cfg_.lambda * dt) + e * noise * eta[i];
        }
        const auto w = srf_.solve_variable_implicit(a, rhs);
        std::vector<double> next(n);
        for (std::size_t i = 0; i < n; ++i) next[i] = psi.value(i) + w[i];
        return ScalarField::from_values(geometry_, std::move(next));
    }

    void draw_noise(std::uint64_t replica, std::size_t k, std::vector<double>& eta) const { srf_.draw_noise(replica, k, eta); }

private:
    Geometry geometry_;
    ExpansionConfig cfg_;
    SrfStepper srf_;
    GmcFactory mollifier_;
};

inline FieldTrajectory solve_phi1(const FieldTrajectory& phi0, const ExpansionConfig& cfg, std::uint64_t replica,
                                  const ScalarField* phi1_init = nullptr, double eta_scale = 1.0)
{
    if (phi0.fields.empty()) throw ConfigError("phi0 trajectory is empty");
    if (std::abs(phi0.dt - cfg.dt) > 1e-15 * cfg.dt || phi0.fields.size() != cfg.steps() + 1) {
        throw GeometryMismatch("phi0 trajectory does not match the expansion time grid");
    }
    const auto& geom = phi0.fields.front().geometry();
    const Phi1Stepper st(geom, cfg);
    ScalarField psi = phi1_init ? *phi1_init : ScalarField(geom);
    FieldTrajectory out{cfg.dt, {psi}, false};
    std::vector<double> eta;
    for (std::size_t k = 0; k + 1 < phi0.fields.size(); ++k) {
        st.draw_noise(replica, k, eta);
        psi = st.step(psi, phi0.fields[k], phi0.fields[k + 1], eta, eta_scale);
        out.fields.push_back(psi);
    }
    return out;
}

/// Coupled srf run at sigma sharing the noise of solve_phi1(replica).
inline FieldTrajectory solve_srf_coupled(const ScalarField& phi_init, const ExpansionConfig& cfg, double sigma,
                                         std::uint64_t replica)
{
    const SrfStepper st(phi_init.geometry(), cfg.srf(sigma));
    SrfState s = st.init(phi_init);
    FieldTrajectory out{cfg.dt, {s.phi}, false};
    for (std::size_t k = 0; k < cfg.steps(); ++k) {
        st.step(s, replica);
        if (s.blown_up) {
            out.blown_up = true;
            break;
        }
        out.fields.push_back(s.phi);
    }
    return out;
}

/// ||phi_sigma(T) - phi0(T) - sigma phi1(T)||^2 in L2(w0).
inline double expansion_error(const ScalarField& phi_sigma, const ScalarField& phi0, const ScalarField& phi1, double sigma)
{
    auto r = phi_sigma - phi0 - sigma * phi1;
    return integrate(r * r);
}

/// Decay time estimate for the deterministic flow at lambda = 0: the
/// linearization about the limiting constant m = (1/2) log(A/area) damps mode
/// k at rate e^{-2m} lambda_k, so ||grad phi0|| falls by `factor` after
/// log(factor) / (e^{-2m} lambda_1).
inline double decay_time(const ScalarField& phi_init, double factor = 100.0)
{
    const auto& g = *phi_init.geometry();
    const auto e2 = phi_init.map([](double x) { return std::exp(2.0 * x); });
    const double m = 0.5 * std::log(integrate(e2) / g.area());
    double lam1 = std::numeric_limits<double>::infinity();
    const auto lam = g.eigenvalues();
    for (std::size_t i = 1; i < lam.size(); ++i) lam1 = std::min(lam1, lam[i]);
    return std::log(factor) / (std::exp(-2.0 * m) * lam1);
}

} // namespace srflab
