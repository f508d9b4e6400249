#pragma once

// Stochastic Ricci flow d phi = e^{-2 phi} Lap phi - lambda + sigma e^{-phi} xi
// on the torus, stepped with coefficients frozen between refreshes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "conventions.hpp"
#include "gff.hpp"
#include "gmc.hpp"
#include "lattice.hpp"
#include "rng.hpp"

namespace srflab {

struct Insertion {
    cplx point;
    double alpha = 0.0;
};

/// How a step's increment enters the field.
enum class SrfIncrement {
    /// phi += (1/2) log(1 + u) with u the increment of the log-free measure
    /// density: cell masses move by m' = m (1 + u), an Euler step of the
    /// area-form equation.
    measure,
    /// phi += drift + noise, the linear stochastic heat equation with the
    /// frozen coefficients.
    linear,
};

/// Placement of the implicit resolvent S = (I - dt cbar Lap)^-1.
enum class ImexForm {
    /// drift = dt (c Lap S phi - lambda). Conservative: sum_x m c Lap S phi = 0
    /// when c = cell_area / m.
    coefficient_outside,
    /// phi' = S [phi + dt ((c - cbar) Lap phi - lambda) + noise].
    resolvent_outside,
    /// Linearized backward Euler with the variable coefficient:
    /// v = dt c Lap (phi + v) - lambda dt + noise, solved by preconditioned CG.
    /// Conservative, and the relative noise of a depleted cell vanishes
    /// with its mass instead of growing.
    variable_implicit,
};

enum class Coefficients {
    /// c = e^{-2 (phi_eps - V_eps)}, d = e^{-(phi_eps - V_eps)}: the inverse
    /// density of the renormalized measure and its square root.
    renormalized,
    /// c = e^{-2 phi_eps}, d = e^{-phi_eps}.
    raw,
    /// c = d = 1 (the coefficients at phi = 0, never refreshed).
    flat,
};

struct SrfConfig {
    double sigma = 0.25;
    double lambda = 0.0;
    double dt = 1e-5;
    /// Coefficient refresh interval; <= 0 freezes the initial coefficients.
    double refresh = 1e-5;
    double horizon = 0.1;
    Mollifier mollifier = Mollifier::lattice();
    /// Renormalization exponents: c and d are scaled by eps^alpha and eps^beta.
    double alpha = 0.0;
    double beta = 0.0;
    std::vector<Insertion> insertions;
    std::vector<ScalarField> observables;
    /// Record every k-th step (and at t = 0).
    std::size_t record_every = 1;
    /// Absorption threshold on A(1); <= 0 selects 1e-6 Im(tau).
    double a_min = 0.0;
    /// Trajectories with max |phi| above this are flagged and terminated.
    double blowup_guard = 60.0;
    SrfIncrement increment = SrfIncrement::measure;
    ImexForm imex = ImexForm::variable_implicit;
    Coefficients coefficients = Coefficients::renormalized;
    /// Fixed implicit coefficient instead of max_x c(x).
    std::optional<double> cbar;
    /// Relative residual for the variable-coefficient implicit solve.
    double solver_tolerance = 1e-6;
    std::uint64_t seed = 0;

    double gamma() const { return gamma_of_sigma(sigma); }

    std::size_t steps() const { return static_cast<std::size_t>(std::llround(horizon / dt)); }

    std::size_t refresh_every() const
    {
        return refresh <= 0.0 ? 0 : std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(refresh / dt)));
    }

    /// Throws ConfigError naming the violated bound.
    void validate(const TorusGeometry& g) const
    {
        require_sigma(sigma);
        if (!(lambda >= 0.0)) throw ConfigError("lambda >= 0 required");
        if (!(dt > 0.0)) throw ConfigError("dt > 0 required");
        if (!(horizon >= dt)) throw ConfigError("T >= dt required");
        if (refresh > 0.0 && dt > refresh * (1.0 + 1e-12)) throw ConfigError("dt <= refresh interval required");
        if (record_every == 0) throw ConfigError("record_every >= 1 required");
        if (cbar && !(*cbar > 0.0)) throw ConfigError("cbar > 0 required");
        if (!(solver_tolerance > 0.0)) throw ConfigError("solver tolerance > 0 required");
        mollifier.validate(g);
        const double q = background_charge(gamma());
        for (const auto& ins : insertions) {
            if (sigma == 0.0 || !(ins.alpha < q)) {
                throw ConfigError("insertion alpha_i >= Q = 2/gamma + gamma/2 (local Seiberg bound)");
            }
        }
        for (const auto& f : observables) {
            require_same(g, *f.geometry());
        }
    }
};

/// Static singular profile of the insertions and the point sources that the
/// stepper adds to the area form.
struct InsertionProfile {
    /// h_sing = sum_i alpha_i G(x_i, .), G = 2 pi (-Lap)^-1 (zero mean).
    ScalarField h_sing;
    /// (gamma/2) h_sing: the field shift carried by the insertions.
    ScalarField phi_shift;
    /// Grid cell of each insertion.
    std::vector<std::size_t> cells;
    /// d A = ... + rate_i delta_{x_i} dt with rate_i = 2 pi gamma alpha_i
    /// (phi-picture time).
    std::vector<double> rates;

    /// Constant drift sum_i rate_i f(x_i) contributed to A(f).
    double drift(const ScalarField& f) const
    {
        double s = 0.0;
        for (std::size_t i = 0; i < cells.size(); ++i) s += rates[i] * f.value(cells[i]);
        return s;
    }
};

/// Torus Green function 2 pi (-Lap)^-1 (delta_x - 1/area) for the grid delta
/// at the cell nearest x.
inline ScalarField green_function(const Geometry& g, cplx x)
{
    std::vector<double> delta(g->cells(), 0.0);
    delta[g->nearest_cell(x)] = 1.0 / g->cell_area();
    const auto d = ScalarField::from_values(g, std::move(delta));
    auto out = apply_multiplier(d, [](double lam, std::size_t i) { return i == 0 ? 0.0 : 2.0 * std::numbers::pi / lam; });
    return out;
}

inline InsertionProfile insertion_decompose(const Geometry& g, const SrfConfig& cfg)
{
    cfg.validate(*g);
    InsertionProfile p{ScalarField(g), ScalarField(g), {}, {}};
    const double gamma = cfg.gamma();
    for (const auto& ins : cfg.insertions) {
        auto gx = green_function(g, ins.point);
        gx *= ins.alpha;
        p.h_sing += gx;
        p.cells.push_back(g->nearest_cell(ins.point));
        p.rates.push_back(2.0 * std::numbers::pi * gamma * ins.alpha);
    }
    p.phi_shift = p.h_sing;
    p.phi_shift *= 0.5 * gamma;
    return p;
}

struct SrfState {
    double t = 0.0;
    std::size_t step = 0;
    ScalarField phi;
    GmcMeasure measure;
    /// Frozen coefficients (including the eps^alpha, eps^beta factors).
    std::vector<double> c;
    std::vector<double> d;
    double cbar = 1.0;
    std::size_t clamp_events = 0;
    bool blown_up = false;
    bool absorbed = false;
};

/// One recorded row.
struct SrfRow {
    std::size_t step = 0;
    double t = 0.0;
    double mass = 0.0;
    /// A(f_i), A(f_i^2), w0(f_i Lap phi), per observable.
    std::vector<double> value;
    std::vector<double> square;
    std::vector<double> laplace;
    /// A(f_i f_j) for i < j in row-major order.
    std::vector<double> pair;
};

struct TrajectoryRecord {
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
    std::vector<SrfRow> rows;
    std::size_t clamp_events = 0;
    bool blown_up = false;
    bool absorbed = false;
    /// Time of absorption or blow-up; +inf if neither happened.
    double event_time = std::numeric_limits<double>::infinity();
    SrfState final_state;
};

class SrfStepper {
public:
    SrfStepper(Geometry geometry, SrfConfig cfg)
        : geometry_(std::move(geometry)), cfg_(std::move(cfg)), factory_(geometry_, cfg_.sigma, cfg_.mollifier)
    {
        cfg_.validate(*geometry_);
        if (cfg_.a_min <= 0.0) {
            cfg_.a_min = 1e-6 * geometry_->area();
        }
        const double eps = cfg_.mollifier.scale(*geometry_);
        scale_c_ = std::pow(eps, cfg_.alpha);
        scale_d_ = std::pow(eps, cfg_.beta);
        if (!cfg_.insertions.empty()) {
            insertions_ = insertion_decompose(geometry_, cfg_);
        }
        for (const auto& f : cfg_.observables) {
            lap_obs_.push_back(laplacian(f).values());
            auto sq = f * f;
            squares_.push_back(sq.values());
            obs_.push_back(f.values());
        }
        for (std::size_t i = 0; i < obs_.size(); ++i) {
            for (std::size_t j = i + 1; j < obs_.size(); ++j) {
                pairs_.push_back((cfg_.observables[i] * cfg_.observables[j]).values());
            }
        }
    }

    const SrfConfig& config() const noexcept { return cfg_; }
    const Geometry& geometry() const noexcept { return geometry_; }
    const GmcFactory& factory() const noexcept { return factory_; }
    const std::optional<InsertionProfile>& insertions() const noexcept { return insertions_; }

    SrfState init(ScalarField phi) const
    {
        require_same(*geometry_, *phi.geometry());
        SrfState s{0.0, 0, std::move(phi), {}, {}, {}, 1.0, 0, false, false};
        rebuild_measure(s);
        refresh(s);
        check(s);
        return s;
    }

    /// Rebuilds A from the current field.
    void rebuild_measure(SrfState& s) const { s.measure = factory_.build(s.phi); }

    /// Recomputes the frozen coefficients from the current field and A.
    void refresh(SrfState& s) const
    {
        const std::size_t n = geometry_->cells();
        s.c.resize(n);
        s.d.resize(n);
        switch (cfg_.coefficients) {
        case Coefficients::flat:
            std::fill(s.c.begin(), s.c.end(), 1.0);
            std::fill(s.d.begin(), s.d.end(), 1.0);
            break;
        case Coefficients::renormalized: {
            const double ca = geometry_->cell_area();
            for (std::size_t i = 0; i < n; ++i) {
                s.c[i] = ca / s.measure.masses[i];
                s.d[i] = std::sqrt(s.c[i]);
            }
            break;
        }
        case Coefficients::raw: {
            const ScalarField pe = factory_.mollify(s.phi);
            for (std::size_t i = 0; i < n; ++i) {
                s.d[i] = std::exp(-pe.value(i));
                s.c[i] = s.d[i] * s.d[i];
            }
            break;
        }
        }
        for (std::size_t i = 0; i < n; ++i) {
            s.c[i] *= scale_c_;
            s.d[i] *= scale_d_;
        }
        s.cbar = cfg_.cbar ? *cfg_.cbar : *std::max_element(s.c.begin(), s.c.end());
    }

    /// Advances one time step using the cell normals eta.
    void step(SrfState& s, std::span<const double> eta) const
    {
        const auto& g = *geometry_;
        const std::size_t n = g.cells();
        const double dt = cfg_.dt;
        std::vector<double> v = increment(s, eta);
        std::vector<double> next(n);
        if (cfg_.increment == SrfIncrement::linear) {
            for (std::size_t i = 0; i < n; ++i) next[i] = s.phi.value(i) + v[i];
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                double ui = 2.0 * v[i];
                if (!(ui > kClampFloor)) {
                    ui = kClampFloor;
                    ++s.clamp_events;
                }
                next[i] = s.phi.value(i) + 0.5 * std::log1p(ui);
            }
        }
        s.phi = ScalarField::from_values(geometry_, std::move(next));
        ++s.step;
        s.t = static_cast<double>(s.step) * dt;
        const std::size_t every = cfg_.refresh_every();
        if (every != 0 && s.step % every == 0) {
            rebuild_measure(s);
            if (cfg_.coefficients != Coefficients::flat) refresh(s);
        }
        check(s);
    }

    /// Linearized field increment v over one step; the measure increment
    /// moves cell masses by m' = m (1 + 2 v).
    std::vector<double> increment(const SrfState& s, std::span<const double> eta) const
    {
        const auto& g = *geometry_;
        const std::size_t n = g.cells();
        const double dt = cfg_.dt;
        const double cbar = s.cbar;
        const double noise = cfg_.sigma * std::sqrt(dt / g.cell_area());
        std::vector<double> v(n);
        switch (cfg_.imex) {
        case ImexForm::resolvent_outside: {
            const auto lap = laplacian(s.phi);
            std::vector<double> rhs(n);
            for (std::size_t i = 0; i < n; ++i) {
                rhs[i] = s.phi.value(i) + dt * ((s.c[i] - cbar) * lap.value(i) - cfg_.lambda) + noise * s.d[i] * eta[i];
            }
            add_sources(s, rhs);
            const auto next = apply_multiplier(ScalarField::from_values(geometry_, std::move(rhs)),
                                               [&](double lam, std::size_t) { return 1.0 / (1.0 + dt * cbar * lam); });
            for (std::size_t i = 0; i < n; ++i) v[i] = next.value(i) - s.phi.value(i);
            break;
        }
        case ImexForm::coefficient_outside: {
            const auto lap_s = apply_multiplier(s.phi, [&](double lam, std::size_t) { return -lam / (1.0 + dt * cbar * lam); });
            const auto ls = lap_s.zero_mean_values();
            for (std::size_t i = 0; i < n; ++i) {
                v[i] = dt * (s.c[i] * ls[i] - cfg_.lambda) + noise * s.d[i] * eta[i];
            }
            add_sources(s, v);
            break;
        }
        case ImexForm::variable_implicit: {
            // (a - dt Lap) v = dt Lap phi - lambda dt a + a d noise eta + sources, a = 1/c.
            const auto lap = laplacian(s.phi);
            std::vector<double> a(n);
            std::vector<double> rhs(n);
            for (std::size_t i = 0; i < n; ++i) {
                a[i] = 1.0 / s.c[i];
                rhs[i] = dt * lap.value(i) - cfg_.lambda * dt * a[i] + a[i] * s.d[i] * noise * eta[i];
            }
            if (insertions_) {
                std::vector<double> src(n, 0.0);
                add_sources(s, src);
                for (std::size_t i = 0; i < n; ++i) rhs[i] += a[i] * src[i];
            }
            v = solve_variable_implicit(a, rhs);
            break;
        }
        }
        return v;
    }

    /// Preconditioned CG for (diag(a) - dt Lap) v = b with P = abar - dt Lap.
    /// Since M = P + diag(a - abar), P p follows from the recurrence
    /// P p' = r' + beta P p and each iteration needs one transform pair.
    /// A final constant shift makes sum_x a v = sum_x b hold to rounding.
    std::vector<double> solve_variable_implicit(const std::vector<double>& a, const std::vector<double>& b) const
    {
        const auto& g = *geometry_;
        const std::size_t n = a.size();
        const double dt = cfg_.dt;
        const auto lam = g.eigenvalues();
        const double abar = compensated_sum(a) / static_cast<double>(n);
        std::vector<double> inv(lam.size());
        for (std::size_t k = 0; k < lam.size(); ++k) inv[k] = 1.0 / (abar + dt * lam[k]);
        auto precondition = [&](const std::vector<double>& r, std::vector<double>& z) { g.filter(r, z, inv); };
        auto dot = [&](const std::vector<double>& x, const std::vector<double>& y) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
            return acc;
        };
        std::vector<double> v(n, 0.0);
        std::vector<double> r = b;
        std::vector<double> z(n);
        precondition(r, z);
        std::vector<double> p = z;
        std::vector<double> pp = r;
        std::vector<double> mp(n);
        double rz = dot(r, z);
        const double target = cfg_.solver_tolerance * std::sqrt(dot(b, b));
        for (std::size_t it = 0; it < kSolverMaxIterations && std::sqrt(dot(r, r)) > target; ++it) {
            for (std::size_t i = 0; i < n; ++i) mp[i] = pp[i] + (a[i] - abar) * p[i];
            const double alpha = rz / dot(p, mp);
            for (std::size_t i = 0; i < n; ++i) {
                v[i] += alpha * p[i];
                r[i] -= alpha * mp[i];
            }
            precondition(r, z);
            const double rz_next = dot(r, z);
            const double beta = rz_next / rz;
            rz = rz_next;
            for (std::size_t i = 0; i < n; ++i) {
                p[i] = z[i] + beta * p[i];
                pp[i] = r[i] + beta * pp[i];
            }
        }
        // Lap annihilates constants, so the mean residual is absorbed exactly.
        std::vector<double> av(n);
        for (std::size_t i = 0; i < n; ++i) av[i] = a[i] * v[i];
        const double shift = (compensated_sum(b) - compensated_sum(av)) / compensated_sum(a);
        for (auto& x : v) x += shift;
        return v;
    }

    /// Draws the step noise from stream (seed, replica, step) and steps.
    void step(SrfState& s, std::uint64_t replica) const
    {
        thread_local std::vector<double> eta;
        draw_noise(replica, s.step, eta);
        step(s, eta);
    }

    void draw_noise(std::uint64_t replica, std::size_t step_index, std::vector<double>& eta) const
    {
        eta.resize(geometry_->cells());
        Stream rng({cfg_.seed, replica, static_cast<std::uint64_t>(step_index)});
        for (auto& e : eta) e = rng.normal();
    }

    /// Observables of the current state (A must be current).
    SrfRow observe(const SrfState& s) const
    {
        SrfRow r;
        r.step = s.step;
        r.t = s.t;
        const auto& m = s.measure.masses;
        r.mass = compensated_sum(m);
        const double ca = geometry_->cell_area();
        const auto phi = s.phi.zero_mean_values();
        for (std::size_t k = 0; k < obs_.size(); ++k) {
            r.value.push_back(dot(obs_[k], m));
            r.square.push_back(dot(squares_[k], m));
            // w0(f Lap phi) = w0(phi Lap f) by symmetry of the spectral Laplacian.
            r.laplace.push_back(ca * dot(lap_obs_[k], phi));
        }
        for (const auto& p : pairs_) r.pair.push_back(dot(p, m));
        return r;
    }

    /// Runs to the horizon, absorption or blow-up. Rows go to `sink` if given,
    /// and are stored in the record when `keep_rows` is set.
    TrajectoryRecord run(ScalarField phi_init, std::uint64_t replica, const std::function<void(const SrfRow&)>& sink = {},
                         bool keep_rows = true) const
    {
        SrfState s = init(std::move(phi_init));
        std::vector<SrfRow> rows;
        const std::size_t every = cfg_.refresh_every();
        const bool fresh_each_step = every == 1;
        auto emit = [&] {
            if (!fresh_each_step) rebuild_measure(s);
            auto row = observe(s);
            if (sink) sink(row);
            if (keep_rows) rows.push_back(std::move(row));
        };
        emit();
        const std::size_t n = cfg_.steps();
        while (s.step < n && !s.blown_up && !s.absorbed) {
            step(s, replica);
            if (s.blown_up) break;
            if (s.step % cfg_.record_every == 0 || s.step == n) {
                emit();
                if (s.measure.total_mass() < cfg_.a_min) s.absorbed = true;
            } else if (fresh_each_step && s.measure.total_mass() < cfg_.a_min) {
                s.absorbed = true;
            }
        }
        const double event = s.blown_up || s.absorbed ? s.t : std::numeric_limits<double>::infinity();
        return TrajectoryRecord{cfg_.seed, replica, std::move(rows), s.clamp_events, s.blown_up, s.absorbed, event, std::move(s)};
    }

private:
    static constexpr double kClampFloor = -1.0 + 1e-12;
    static constexpr std::size_t kSolverMaxIterations = 500;

    static double dot(const std::vector<double>& a, std::span<const double> b)
    {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    }

    /// Point sources rate_i dt delta_{x_i} on the area form, as a field increment.
    void add_sources(const SrfState& s, std::vector<double>& v) const
    {
        if (!insertions_) return;
        for (std::size_t k = 0; k < insertions_->cells.size(); ++k) {
            const std::size_t cell = insertions_->cells[k];
            v[cell] += 0.5 * insertions_->rates[k] * cfg_.dt / s.measure.masses[cell];
        }
    }


    void check(SrfState& s) const
    {
        double worst = 0.0;
        for (std::size_t i = 0; i < s.phi.size(); ++i) {
            const double v = std::abs(s.phi.value(i));
            if (!std::isfinite(v)) {
                worst = std::numeric_limits<double>::infinity();
                break;
            }
            worst = std::max(worst, v);
        }
        if (worst > cfg_.blowup_guard) s.blown_up = true;
    }

    Geometry geometry_;
    SrfConfig cfg_;
    GmcFactory factory_;
    double scale_c_ = 1.0;
    double scale_d_ = 1.0;
    std::optional<InsertionProfile> insertions_;
    std::vector<std::vector<double>> obs_;
    std::vector<std::vector<double>> squares_;
    std::vector<std::vector<double>> lap_obs_;
    std::vector<std::vector<double>> pairs_;
};

inline TrajectoryRecord run_trajectory(const SrfConfig& cfg, const ScalarField& phi_init, std::uint64_t replica = 0)
{
    return SrfStepper(phi_init.geometry(), cfg).run(phi_init, replica);
}

/// Mean shift m that gives A_0(1) = target for the field phi.
inline ScalarField with_total_mass(ScalarField phi, double sigma, const Mollifier& m, double target)
{
    const double total = build_gmc(phi, sigma, m).total_mass();
    phi.add_constant(0.5 * std::log(target / total));
    return phi;
}

} // namespace srflab
