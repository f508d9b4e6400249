#pragma once

// One-dimensional total-area diffusion dA = (a - k A) dt + c sqrt(A) dB and
// its closed forms. In the phi picture without insertions a = 0, k = 2 lambda,
// c = 2 sigma.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "conventions.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace srflab {

struct MassSdeConfig {
    Convention convention = Convention::phi;
    /// sigma (phi picture) or gamma (X picture).
    double coupling = 1.0;
    /// lambda (phi picture) or mu (X picture).
    double decay = 0.0;
    /// Total insertion weight sum_i alpha_i.
    double alpha_bar = 0.0;
    /// Euler characteristic; 0 on the torus.
    double chi = 0.0;
    double a0 = 1.0;
    double dt = 1e-4;
    double horizon = 1.0;

    double gamma() const { return convention == Convention::phi ? coupling / std::sqrt(std::numbers::pi) : coupling; }
    double sigma() const { return convention == Convention::phi ? coupling : std::sqrt(std::numbers::pi) * coupling; }
    double q() const { return background_charge(gamma()); }
    /// Net insertion charge alpha_bar - Q chi.
    double charge() const { return alpha_bar - q() * chi; }
    /// BESQ dimension (2/gamma)(alpha_bar - Q chi).
    double delta() const { return 2.0 / gamma() * charge(); }

    /// Constant drift a.
    double drift_constant() const
    {
        const double base = gamma() * charge();
        return convention == Convention::phi ? 2.0 * std::numbers::pi * base : base;
    }
    /// Linear drift rate k.
    double drift_rate() const
    {
        return convention == Convention::phi ? 2.0 * decay : decay * gamma() * gamma();
    }
    /// Diffusion coefficient c.
    double diffusion() const
    {
        return convention == Convention::phi ? 2.0 * coupling : std::sqrt(2.0) * coupling;
    }

    void validate() const
    {
        if (!(coupling > 0.0)) throw ConfigError(convention == Convention::phi ? "sigma > 0 required" : "gamma > 0 required");
        if (gamma() >= 2.0) throw ConfigError("sigma >= 2*sqrt(pi)");
        if (!(decay >= 0.0)) throw ConfigError(convention == Convention::phi ? "lambda >= 0 required" : "mu >= 0 required");
        if (!(a0 > 0.0)) throw ConfigError("A0 > 0 required");
        if (!(dt > 0.0) || !(horizon > 0.0)) throw ConfigError("dt > 0 and T > 0 required");
        if (dt > horizon) throw ConfigError("dt <= T required");
    }
};

enum class BoundaryClass { never_hits_zero, hits_zero_continuable, absorbing };

inline std::string to_string(BoundaryClass c)
{
    switch (c) {
    case BoundaryClass::never_hits_zero: return "never-hits-zero";
    case BoundaryClass::hits_zero_continuable: return "hits-zero-continuable";
    case BoundaryClass::absorbing: return "absorbing";
    }
    return "?";
}

inline BoundaryClass classify_boundary(double delta)
{
    if (delta >= 2.0) return BoundaryClass::never_hits_zero;
    if (delta > 0.0) return BoundaryClass::hits_zero_continuable;
    return BoundaryClass::absorbing;
}

inline BoundaryClass classify_boundary(const MassSdeConfig& cfg) { return classify_boundary(cfg.delta()); }

struct SeibergReport {
    double q = 0.0;
    std::vector<bool> local_ok;
    bool all_local_ok = true;
    bool global_ok = false;
    double delta = 0.0;
    BoundaryClass boundary = BoundaryClass::absorbing;
};

/// Local bounds alpha_i < Q and the global bound alpha_bar - Q chi > 0.
inline SeibergReport seiberg_check(double gamma, const std::vector<double>& alphas, double chi = 0.0)
{
    SeibergReport r;
    r.q = background_charge(gamma);
    double total = 0.0;
    for (double a : alphas) {
        r.local_ok.push_back(a < r.q);
        r.all_local_ok = r.all_local_ok && a < r.q;
        total += a;
    }
    r.global_ok = total - r.q * chi > 0.0;
    r.delta = 2.0 / gamma * (total - r.q * chi);
    r.boundary = classify_boundary(r.delta);
    return r;
}

struct MassPaths {
    /// First time the path reaches 0; +inf if it did not within the horizon.
    std::vector<double> hit_time;
    std::vector<double> final_value;
    std::vector<double> min_value;
    std::vector<double> max_value;
    std::vector<double> record_times;
    /// Row-major [path][record time].
    std::vector<double> recorded;
    /// Paths that reached 0 and were observed at 0 for the rest of the horizon.
    std::size_t stayed_at_zero = 0;
    double delta = 0.0;
    BoundaryClass boundary = BoundaryClass::absorbing;

    std::size_t paths() const noexcept { return hit_time.size(); }
    double recorded_at(std::size_t path, std::size_t j) const { return recorded[path * record_times.size() + j]; }
    double hit_fraction() const
    {
        std::size_t hits = 0;
        for (double t : hit_time) hits += std::isfinite(t) ? 1 : 0;
        return static_cast<double>(hits) / static_cast<double>(hit_time.size());
    }
};

/// Simulates n_paths independent paths. Path i uses stream (seed, i), so two
/// calls with equal seeds are coupled through the same Brownian increments.
///
/// delta < 2: full-truncation Euler-Maruyama on X with A = max(X, 0); the
/// first step with X <= 0 is the hitting time. When a <= 0 the truncated
/// dynamics from X <= 0 are frozen, so 0 is absorbing; for 0 < delta < 2 the
/// path is stopped at the hit.
/// delta >= 2: drift-implicit scheme on Y = sqrt(A), which stays positive.
inline MassPaths simulate_mass(const MassSdeConfig& cfg, std::size_t n_paths, std::uint64_t seed,
                               std::vector<double> record_times = {})
{
    cfg.validate();
    const double a = cfg.drift_constant();
    const double k = cfg.drift_rate();
    const double c = cfg.diffusion();
    const double dt = cfg.dt;
    const double sdt = std::sqrt(dt);
    const auto n_steps = static_cast<std::size_t>(std::llround(cfg.horizon / dt));
    std::sort(record_times.begin(), record_times.end());
    std::vector<std::size_t> record_steps;
    for (double t : record_times) {
        if (t < 0.0 || t > cfg.horizon + 0.5 * dt) throw ConfigError("record time outside [0, T]");
        record_steps.push_back(static_cast<std::size_t>(std::llround(t / dt)));
    }
    const std::size_t nr = record_steps.size();

    MassPaths out;
    out.delta = cfg.delta();
    out.boundary = classify_boundary(out.delta);
    out.record_times = record_times;
    out.hit_time.assign(n_paths, std::numeric_limits<double>::infinity());
    out.final_value.assign(n_paths, 0.0);
    out.min_value.assign(n_paths, 0.0);
    out.max_value.assign(n_paths, 0.0);
    out.recorded.assign(n_paths * nr, 0.0);
    std::vector<unsigned char> stayed(n_paths, 0);
    const bool implicit = out.delta >= 2.0;
    const bool absorbing = a <= 0.0;

    parallel_for(n_paths, [&](std::size_t p) {
        Stream rng({seed, p, 0});
        double x = cfg.a0;
        double lo = x;
        double hi = x;
        std::size_t next = 0;
        auto record = [&](std::size_t step, double v) {
            while (next < nr && record_steps[next] == step) {
                out.recorded[p * nr + next++] = v;
            }
        };
        record(0, x);
        bool hit = false;
        if (implicit) {
            // Y' = Y + ((4a - c^2)/(8Y') - kY'/2) dt + (c/2) dW, solved for Y' > 0.
            double y = std::sqrt(x);
            const double lead = 1.0 + 0.5 * k * dt;
            const double src = (4.0 * a - c * c) * dt / 8.0;
            for (std::size_t s = 1; s <= n_steps; ++s) {
                const double b = y + 0.5 * c * sdt * rng.normal();
                y = (b + std::sqrt(b * b + 4.0 * lead * src)) / (2.0 * lead);
                x = y * y;
                lo = std::min(lo, x);
                hi = std::max(hi, x);
                record(s, x);
            }
        } else {
            for (std::size_t s = 1; s <= n_steps; ++s) {
                const double xp = std::max(x, 0.0);
                x = x + (a - k * xp) * dt + c * std::sqrt(xp) * sdt * rng.normal();
                const double v = std::max(x, 0.0);
                hi = std::max(hi, v);
                if (x <= 0.0) {
                    out.hit_time[p] = static_cast<double>(s) * dt;
                    hit = true;
                    lo = 0.0;
                    // From X <= 0 with a <= 0 the scheme is deterministic and
                    // nonincreasing, so the rest of the path is 0. Otherwise
                    // the path is stopped.
                    stayed[p] = absorbing ? 1 : 0;
                    record(s, 0.0);
                    for (std::size_t r = next; r < nr; ++r) out.recorded[p * nr + r] = 0.0;
                    next = nr;
                    x = 0.0;
                    break;
                }
                lo = std::min(lo, v);
                record(s, v);
            }
        }
        out.final_value[p] = hit ? 0.0 : x;
        out.min_value[p] = lo;
        out.max_value[p] = hi;
    });
    for (unsigned char s : stayed) out.stayed_at_zero += s;
    return out;
}

/// E[exp(-u A_t)] for the insertion-free diffusion, from the Riccati equation
/// v' = -(c^2/2) v^2 - k v, v(0) = u, giving E = exp(-A0 v_t).
inline double laplace_oracle(const MassSdeConfig& cfg, double u, double t)
{
    if (cfg.alpha_bar != 0.0 || cfg.chi != 0.0) {
        throw ConfigError("laplace_oracle has no closed form with insertions");
    }
    if (u < 0.0 || t < 0.0) throw ConfigError("laplace_oracle needs u >= 0 and t >= 0");
    const double k = cfg.drift_rate();
    const double q = 0.5 * cfg.diffusion() * cfg.diffusion();
    double v;
    if (k == 0.0) {
        v = u / (1.0 + q * u * t);
    } else {
        const double e = std::exp(-k * t);
        v = k * u * e / (k + q * u * -std::expm1(-k * t));
    }
    return std::exp(-cfg.a0 * v);
}

/// P(T0 <= t) for the insertion-free diffusion (the u -> inf limit).
inline double hitting_cdf(const MassSdeConfig& cfg, double t)
{
    if (t <= 0.0) return 0.0;
    const double k = cfg.drift_rate();
    const double q = 0.5 * cfg.diffusion() * cfg.diffusion();
    const double v = k == 0.0 ? 1.0 / (q * t) : k * std::exp(-k * t) / (q * -std::expm1(-k * t));
    return std::exp(-cfg.a0 * v);
}

/// P(T0 <= t) for delta < 2. With Z(s) = 4/c^2 e^{kt} A_t at s = (e^{kt} - 1)/k,
/// Z is BESQ(delta), whose hitting time is x / (2 G) with G ~ Gamma(1 - delta/2).
inline double besq_hitting_cdf(const MassSdeConfig& cfg, double t)
{
    const double d = cfg.delta();
    if (!(d < 2.0) || t <= 0.0) return 0.0;
    const double k = cfg.drift_rate();
    const double s = k == 0.0 ? t : std::expm1(k * t) / k;
    const double c = cfg.diffusion();
    const double x = 4.0 * cfg.a0 / (c * c);
    return boost::math::gamma_q(1.0 - 0.5 * d, x / (2.0 * s));
}

} // namespace srflab
