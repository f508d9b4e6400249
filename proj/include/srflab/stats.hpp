#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "rng.hpp"

namespace srflab {

/// Neumaier compensated accumulator.
class CompensatedSum {
public:
    void add(double v) noexcept
    {
        const double t = sum_ + v;
        comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> xs) noexcept
{
    CompensatedSum s;
    for (double x : xs) {
        s.add(x);
    }
    return s.value();
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    double sd = 0.0;
    std::size_t n = 0;
};

inline MeanSe mean_se(std::span<const double> xs)
{
    MeanSe r;
    r.n = xs.size();
    if (r.n == 0) {
        return r;
    }
    r.mean = compensated_sum(xs) / static_cast<double>(r.n);
    if (r.n > 1) {
        CompensatedSum ss;
        for (double x : xs) {
            ss.add((x - r.mean) * (x - r.mean));
        }
        r.sd = std::sqrt(ss.value() / static_cast<double>(r.n - 1));
        r.se = r.sd / std::sqrt(static_cast<double>(r.n));
    }
    return r;
}

/// Sample covariance of paired data.
inline double covariance(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size() || a.size() < 2) {
        throw std::invalid_argument("covariance needs two equal-length samples of size >= 2");
    }
    const double ma = compensated_sum(a) / static_cast<double>(a.size());
    const double mb = compensated_sum(b) / static_cast<double>(b.size());
    CompensatedSum s;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s.add((a[i] - ma) * (b[i] - mb));
    }
    return s.value() / static_cast<double>(a.size() - 1);
}

inline double correlation(std::span<const double> a, std::span<const double> b)
{
    const double c = covariance(a, b);
    return c / std::sqrt(covariance(a, a) * covariance(b, b));
}

/// Asymptotic Kolmogorov survival function P(K > x).
inline double kolmogorov_q(double x)
{
    if (x <= 0.0) {
        return 1.0;
    }
    if (x < 0.3) {
        // Small-x form avoids the slowly converging alternating series.
        const double pi = 3.14159265358979323846;
        double s = 0.0;
        for (int k = 1; k <= 20; ++k) {
            const double a = (2 * k - 1) * pi / (2.0 * x);
            s += std::exp(-0.5 * a * a);
        }
        return 1.0 - std::sqrt(2.0 * pi) / x * s;
    }
    double s = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        s += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-17) {
            break;
        }
    }
    return std::clamp(s, 0.0, 1.0);
}

struct KsResult {
    double distance = 0.0;
    double p_value = 1.0;
};

/// One-sample KS against a continuous CDF. Observations above `censor`
/// (e.g. events not seen by a finite horizon, stored as +inf) are right
/// censored: the supremum runs over t <= censor only, which makes the
/// asymptotic p-value conservative.
inline KsResult ks_one_sample(std::vector<double> xs, const std::function<double(double)>& cdf,
                              double censor = std::numeric_limits<double>::infinity())
{
    if (xs.empty()) {
        throw std::invalid_argument("ks test on an empty sample");
    }
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    std::size_t i = 0;
    for (; i < xs.size() && xs[i] <= censor; ++i) {
        const double f = cdf(xs[i]);
        d = std::max({d, std::abs((i + 1) / n - f), std::abs(f - i / n)});
    }
    if (i < xs.size() && std::isfinite(censor)) {
        d = std::max(d, std::abs(i / n - cdf(censor)));
    }
    return {d, kolmogorov_q((std::sqrt(n) + 0.12 + 0.11 / std::sqrt(n)) * d)};
}

/// Two-sample KS test with the asymptotic p-value.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b)
{
    if (a.empty() || b.empty()) {
        throw std::invalid_argument("ks test on an empty sample");
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(i / na - j / nb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    return {d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d)};
}

/// Ordinary least squares y = intercept + slope x with classical SEs.
struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double intercept_se = 0.0;
    std::size_t n = 0;
};

inline LinearFit ols(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 3) {
        throw std::invalid_argument("ols needs at least 3 paired points");
    }
    const double n = static_cast<double>(x.size());
    const double mx = compensated_sum(x) / n;
    const double my = compensated_sum(y) / n;
    CompensatedSum sxx;
    CompensatedSum sxy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx.add((x[i] - mx) * (x[i] - mx));
        sxy.add((x[i] - mx) * (y[i] - my));
    }
    LinearFit f;
    f.n = x.size();
    f.slope = sxy.value() / sxx.value();
    f.intercept = my - f.slope * mx;
    CompensatedSum rss;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        rss.add(r * r);
    }
    const double s2 = rss.value() / (n - 2.0);
    f.slope_se = std::sqrt(s2 / sxx.value());
    f.intercept_se = std::sqrt(s2 * (1.0 / n + mx * mx / sxx.value()));
    return f;
}

/// Regression through the origin y = slope x.
inline LinearFit ols_origin(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("ols needs at least 2 paired points");
    }
    CompensatedSum sxx;
    CompensatedSum sxy;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx.add(x[i] * x[i]);
        sxy.add(x[i] * y[i]);
    }
    LinearFit f;
    f.n = x.size();
    f.slope = sxy.value() / sxx.value();
    CompensatedSum rss;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - f.slope * x[i];
        rss.add(r * r);
    }
    f.slope_se = std::sqrt(rss.value() / (static_cast<double>(x.size()) - 1.0) / sxx.value());
    return f;
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double v) const noexcept { return lo <= v && v <= hi; }
};

/// Percentile interval of a sorted-in-place bootstrap distribution.
inline Interval percentile_interval(std::vector<double> stats, double level = 0.95)
{
    if (stats.empty()) {
        throw std::invalid_argument("empty bootstrap distribution");
    }
    std::sort(stats.begin(), stats.end());
    const double a = 0.5 * (1.0 - level);
    auto at = [&](double q) {
        const double pos = q * static_cast<double>(stats.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = std::min(lo + 1, stats.size() - 1);
        return stats[lo] + (pos - lo) * (stats[hi] - stats[lo]);
    };
    return {at(a), at(1.0 - a)};
}

/// Nonparametric bootstrap over n independent units. stat receives the
/// multiplicity of each unit in the resample.
inline Interval bootstrap_interval(std::size_t n_units, std::size_t n_boot, std::uint64_t seed,
                                   const std::function<double(std::span<const unsigned>)>& stat,
                                   double level = 0.95)
{
    std::vector<double> out(n_boot);
    std::vector<unsigned> counts(n_units);
    for (std::size_t b = 0; b < n_boot; ++b) {
        Stream rng({seed, 0x5eedb007ULL, b});
        std::fill(counts.begin(), counts.end(), 0u);
        for (std::size_t i = 0; i < n_units; ++i) {
            const auto k = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n_units));
            ++counts[std::min(k, n_units - 1)];
        }
        out[b] = stat(counts);
    }
    return percentile_interval(std::move(out), level);
}

/// Least-squares slope of log y on log x.
inline double loglog_slope(std::span<const double> x, std::span<const double> y)
{
    std::vector<double> lx(x.size());
    std::vector<double> ly(y.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
    }
    if (x.size() == 2) {
        return (ly[1] - ly[0]) / (lx[1] - lx[0]);
    }
    return ols(lx, ly).slope;
}

} // namespace srflab
