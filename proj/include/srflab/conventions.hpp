#pragma once

// Dictionary between the conformal-factor parameters (sigma, lambda) and the
// Liouville parameters (gamma, mu): phi = (gamma/2) X, sigma = sqrt(pi) gamma,
// lambda = pi mu gamma^2. Time in the X picture runs 2 pi times faster.

#include <cmath>
#include <numbers>

#include "lattice.hpp"

namespace srflab {

struct PhiParams {
    double sigma = 0.0;
    double lambda = 0.0;
};

struct XParams {
    double gamma = 0.0;
    double mu = 0.0;
};

enum class Convention { phi, x };

inline XParams to_x(PhiParams p)
{
    if (!(p.sigma > 0.0)) {
        throw ConfigError("sigma > 0 required for conversion");
    }
    const double gamma = p.sigma / std::sqrt(std::numbers::pi);
    return {gamma, p.lambda / (std::numbers::pi * gamma * gamma)};
}

inline PhiParams to_phi(XParams p)
{
    if (!(p.gamma > 0.0)) {
        throw ConfigError("gamma > 0 required for conversion");
    }
    return {std::sqrt(std::numbers::pi) * p.gamma, std::numbers::pi * p.mu * p.gamma * p.gamma};
}

/// Background charge Q = 2/gamma + gamma/2.
inline double background_charge(double gamma) { return 2.0 / gamma + 0.5 * gamma; }

/// X-picture time for a phi-picture time.
inline double x_time(double phi_time) { return 2.0 * std::numbers::pi * phi_time; }
inline double phi_time(double x_time) { return x_time / (2.0 * std::numbers::pi); }

} // namespace srflab
