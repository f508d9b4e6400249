#pragma once

// Monte Carlo checks of the integration-by-parts identities for the GFF and
// the Liouville measure, and of the martingale-problem identities (drift,
// quadratic variation, covariation) of A_t(f) along SRF trajectories.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "gff.hpp"
#include "gmc.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "srf.hpp"
#include "stats.hpp"

namespace srflab {

/// G(phi) = q(M(f_0), M(f_1), ..., M(f_k)) with f_0 = 1 and q supported in
/// (a, b) x box in the first coordinate.
struct TestFunctional {
    using Point = std::vector<double>;
    /// Returns q(x); writes the gradient into grad unless grad is empty.
    using Evaluator = std::function<double(std::span<const double> x, std::span<double> grad)>;

    Evaluator eval;
    std::function<std::vector<Point>(const Point&)> hessian;
    /// Support box, one (lo, hi) per coordinate; coordinate 0 is M(1).
    std::vector<std::pair<double, double>> support;
    /// f_1..f_k (f_0 = 1 is implicit).
    std::vector<ScalarField> observables;

    std::size_t arity() const { return observables.size() + 1; }
    double mass_lo() const { return support.front().first; }
    double mass_hi() const { return support.front().second; }

    double q(const Point& x) const { return eval(x, {}); }
    Point gradient(const Point& x) const
    {
        Point d(x.size());
        eval(x, d);
        return d;
    }

    void validate() const
    {
        if (support.size() != arity()) throw ConfigError("support box needs one interval per coordinate");
        for (const auto& [lo, hi] : support) {
            if (!(lo < hi)) throw ConfigError("degenerate support box (a >= b)");
        }
        if (!(mass_lo() > 0.0)) throw ConfigError("support box needs 0 < a < b in M(1)");
    }

    bool inside(const Point& x) const
    {
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!(x[i] > support[i].first && x[i] < support[i].second)) return false;
        }
        return true;
    }

    /// Coordinates (M(1), M(f_1), ...) of a measure.
    Point coordinates(const GmcMeasure& m) const
    {
        Point x{m.total_mass()};
        for (const auto& f : observables) x.push_back(integrate(f, m));
        return x;
    }

    double operator()(const GmcMeasure& m) const { return q(coordinates(m)); }
};

namespace detail {

/// exp(1 - 1/(1 - u^2)) on |u| < 1 and its first two u-derivatives.
struct BumpValue {
    double v = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
};

inline BumpValue bump(double u)
{
    if (!(std::abs(u) < 1.0)) return {};
    const double s = 1.0 - u * u;
    const double v = std::exp(1.0 - 1.0 / s);
    const double g = -2.0 * u / (s * s);
    const double dg = -2.0 / (s * s) - 8.0 * u * u / (s * s * s);
    return {v, v * g, v * (g * g + dg)};
}

} // namespace detail

/// q(x) = prod_i B((2 x_i - lo_i - hi_i) / (hi_i - lo_i)) for the standard
/// smooth bump B, so supp q is exactly the box.
inline TestFunctional product_bump(std::vector<std::pair<double, double>> box, std::vector<ScalarField> observables)
{
    TestFunctional g;
    g.support = box;
    g.observables = std::move(observables);
    g.validate();
    auto parts = [box](std::span<const double> x, std::vector<detail::BumpValue>& b, std::vector<double>& scale) {
        b.resize(x.size());
        scale.resize(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const auto [lo, hi] = box[i];
            scale[i] = 2.0 / (hi - lo);
            b[i] = detail::bump((2.0 * x[i] - lo - hi) / (hi - lo));
        }
    };
    auto others = [](const std::vector<detail::BumpValue>& b, std::size_t skip1, std::size_t skip2) {
        double p = 1.0;
        for (std::size_t i = 0; i < b.size(); ++i) {
            if (i != skip1 && i != skip2) p *= b[i].v;
        }
        return p;
    };
    g.eval = [parts, others](std::span<const double> x, std::span<double> grad) {
        thread_local std::vector<detail::BumpValue> b;
        thread_local std::vector<double> s;
        parts(x, b, s);
        if (!grad.empty()) {
            for (std::size_t i = 0; i < x.size(); ++i) grad[i] = b[i].d1 * s[i] * others(b, i, x.size());
        }
        return others(b, x.size(), x.size());
    };
    g.hessian = [parts, others](const TestFunctional::Point& x) {
        std::vector<detail::BumpValue> b;
        std::vector<double> s;
        parts(x, b, s);
        std::vector<TestFunctional::Point> h(x.size(), TestFunctional::Point(x.size()));
        for (std::size_t i = 0; i < x.size(); ++i) {
            for (std::size_t j = 0; j < x.size(); ++j) {
                h[i][j] = i == j ? b[i].d2 * s[i] * s[i] * others(b, i, i)
                                 : b[i].d1 * s[i] * b[j].d1 * s[j] * others(b, i, j);
            }
        }
        return h;
    };
    return g;
}

/// G H as a test functional over the concatenated observables.
inline TestFunctional product(const TestFunctional& G, const TestFunctional& H)
{
    const std::size_t kg = G.arity();
    TestFunctional out;
    out.observables = G.observables;
    out.observables.insert(out.observables.end(), H.observables.begin(), H.observables.end());
    out.support = G.support;
    out.support[0] = {std::max(G.mass_lo(), H.mass_lo()), std::min(G.mass_hi(), H.mass_hi())};
    out.support.insert(out.support.end(), H.support.begin() + 1, H.support.end());
    out.eval = [G, H, kg](std::span<const double> x, std::span<double> grad) {
        TestFunctional::Point a(x.begin(), x.begin() + static_cast<long>(kg));
        TestFunctional::Point b{x[0]};
        b.insert(b.end(), x.begin() + static_cast<long>(kg), x.end());
        if (grad.empty()) return G.eval(a, {}) * H.eval(b, {});
        TestFunctional::Point da(a.size());
        TestFunctional::Point db(b.size());
        const double ga = G.eval(a, da);
        const double hb = H.eval(b, db);
        grad[0] = da[0] * hb + ga * db[0];
        for (std::size_t i = 1; i < kg; ++i) grad[i] = da[i] * hb;
        for (std::size_t j = 1; j < db.size(); ++j) grad[kg + j - 1] = ga * db[j];
        return ga * hb;
    };
    out.validate();
    return out;
}

/// True when q and its gradient vanish at every one of n random points
/// drawn outside the support box (within a margin of each face).
inline bool vanishes_outside_support(const TestFunctional& G, std::size_t n, std::uint64_t seed)
{
    Stream rng({seed, 0, 0});
    for (std::size_t s = 0; s < n; ++s) {
        TestFunctional::Point x(G.arity());
        for (std::size_t i = 0; i < x.size(); ++i) {
            const auto [lo, hi] = G.support[i];
            const double w = hi - lo;
            x[i] = lo - w + 3.0 * w * rng.uniform();
        }
        // Push one coordinate outside.
        const auto k = std::min(static_cast<std::size_t>(rng.uniform() * x.size()), x.size() - 1);
        const auto [lo, hi] = G.support[k];
        x[k] = rng.uniform() < 0.5 ? lo - (hi - lo) * rng.uniform() : hi + (hi - lo) * rng.uniform();
        if (G.q(x) != 0.0) return false;
        for (double d : G.gradient(x)) {
            if (d != 0.0) return false;
        }
    }
    return true;
}

/// D_h G(phi) = 2 sum_i d_i q(...) M(f_i h_eps), exact for the discrete measure
/// M = build_gmc(phi): shifting phi by t h multiplies the masses by e^{2 t h_eps}.
inline double frechet(const TestFunctional& G, const ScalarField& h, const GmcMeasure& M)
{
    require_same(*h.geometry(), *M.geometry);
    for (const auto& f : G.observables) require_same(*f.geometry(), *M.geometry);
    const ScalarField he = mollify(h, M.mollifier);
    const auto d = G.gradient(G.coordinates(M));
    double acc = d[0] * integrate(he, M);
    for (std::size_t i = 0; i < G.observables.size(); ++i) acc += d[i + 1] * integrate(G.observables[i] * he, M);
    return 2.0 * acc;
}

inline double frechet(const TestFunctional& G, const ScalarField& phi, const ScalarField& h, const GmcMeasure& M)
{
    require_same(*phi.geometry(), *M.geometry);
    return frechet(G, h, M);
}

/// Masses of M_{phi + t h} from those of M_phi.
inline GmcMeasure shifted(const GmcMeasure& M, const ScalarField& h, double t)
{
    const ScalarField he = mollify(h, M.mollifier);
    GmcMeasure out = M;
    for (std::size_t i = 0; i < out.masses.size(); ++i) out.masses[i] *= std::exp(2.0 * t * he.value(i));
    return out;
}

struct IbpSettings {
    double sigma = 0.5;
    double lambda = 0.5;
    Mollifier mollifier = Mollifier::heat(1.0 / 16.0);
    std::size_t samples = 100000;
    std::uint64_t seed = 0;
    /// Relative tolerance of the per-sample adaptive quadrature.
    double quadrature_tolerance = 1e-8;

    void validate(const TorusGeometry& g) const
    {
        require_sigma(sigma);
        if (!(lambda >= 0.0)) throw ConfigError("lambda >= 0 required");
        if (samples < 2) throw ConfigError("ibp needs at least 2 samples");
        mollifier.validate(g);
    }
};

struct IbpCase {
    std::string id;
    TestFunctional G;
    ScalarField h;
};

struct IbpReport {
    std::string id;
    double lhs = 0.0;
    double lhs_se = 0.0;
    double rhs = 0.0;
    double rhs_se = 0.0;
    /// Standard error of the paired difference lhs - rhs (sampling and quadrature).
    double diff_se = 0.0;
    /// Mean absolute per-sample quadrature error bound.
    double quadrature_error = 0.0;
    double z = 0.0;
    std::size_t samples = 0;
    /// Mean integrand evaluations per sample and side.
    double nodes = 0.0;
    std::uint64_t seed = 0;
};

namespace detail {

struct IbpSample {
    double lhs = 0.0;
    double rhs = 0.0;
    double error = 0.0;
    double nodes = 0.0;
};

/// Both sides of the identity for one zero-mean field, integrated over the
/// mean m. With M_{m+phi0}(f) = e^{2m} M_{phi0}(f) and the support (a, b) of
/// q in M(1), m ranges over [log(a/M0)/2, log(b/M0)/2].
///   lhs = <phi0, h>_H int q e^{-lambda x / sigma^2} dm
///   rhs = int ((sigma^2/2) D_h G - lambda G M(h_eps)) e^{-lambda x / sigma^2} dm,  x = e^{2m} M0(1)
struct SampleMoments {
    double total = 0.0;
    std::vector<double> f;
    std::vector<double> fh;
    double h = 0.0;
    double gi = 0.0;
};

inline IbpSample ibp_sample(const TestFunctional& G, const SampleMoments& s, const IbpSettings& cfg)
{
    using boost::math::quadrature::gauss_kronrod;
    const double m_lo = 0.5 * std::log(G.mass_lo() / s.total);
    const double m_hi = 0.5 * std::log(G.mass_hi() / s.total);
    const double beta = cfg.lambda / (cfg.sigma * cfg.sigma);
    const std::size_t k = G.observables.size();
    std::size_t evals = 0;
    TestFunctional::Point x(k + 1);
    auto coords = [&](double m) {
        const double e = std::exp(2.0 * m);
        x[0] = e * s.total;
        for (std::size_t i = 0; i < k; ++i) x[i + 1] = e * s.f[i];
        return e;
    };
    TestFunctional::Point grad(k + 1);
    auto lhs_fn = [&](double m) {
        ++evals;
        coords(m);
        return G.eval(x, {}) * std::exp(-beta * x[0]);
    };
    auto rhs_fn = [&](double m) {
        ++evals;
        const double e = coords(m);
        const double qv = G.eval(x, grad);
        double dh = grad[0] * s.h;
        for (std::size_t i = 0; i < k; ++i) dh += grad[i + 1] * s.fh[i];
        dh *= 2.0 * e;
        return (0.5 * cfg.sigma * cfg.sigma * dh - cfg.lambda * qv * e * s.h) * std::exp(-beta * x[0]);
    };
    IbpSample out;
    double err_l = 0.0;
    double err_r = 0.0;
    double l1_l = 0.0;
    double l1_r = 0.0;
    const double ql = gauss_kronrod<double, 21>::integrate(lhs_fn, m_lo, m_hi, 15, cfg.quadrature_tolerance, &err_l, &l1_l);
    out.rhs = gauss_kronrod<double, 21>::integrate(rhs_fn, m_lo, m_hi, 15, cfg.quadrature_tolerance, &err_r, &l1_r);
    out.lhs = s.gi * ql;
    // Rounding floor so that an exactly cancelling integrand still carries an error bar.
    constexpr double floor = 64.0 * std::numeric_limits<double>::epsilon();
    out.error = std::hypot(std::max(err_l, floor * l1_l) * std::abs(s.gi), std::max(err_r, floor * l1_r));
    out.nodes = 0.5 * static_cast<double>(evals);
    return out;
}

} // namespace detail

/// Both sides of the Liouville integration by parts
///   int G <grad phi, grad h> dnu = int ((sigma^2/2) D_h G - lambda G M(h)) dnu,
///   dnu = e^{-(lambda/sigma^2) M(1)} dm dmu(phi0),
/// for every case, from one shared set of GFF samples. Sample i uses the
/// stream (seed, 0, i).
inline std::vector<IbpReport> ibp_residuals(std::span<const IbpCase> cases, const IbpSettings& cfg)
{
    if (cases.empty()) return {};
    const Geometry geom = cases.front().h.geometry();
    cfg.validate(*geom);
    for (const auto& c : cases) {
        c.G.validate();
        require_same(*c.h.geometry(), *geom);
    }
    const GffSampler sampler(geom, cfg.sigma, cfg.seed);
    const GmcFactory factory(geom, cfg.sigma, cfg.mollifier);
    struct Prepared {
        std::vector<std::vector<double>> f;
        std::vector<std::vector<double>> fh;
        std::vector<double> h;
        Spectrum hs;
    };
    std::vector<Prepared> prep;
    for (const auto& c : cases) {
        const ScalarField he = factory.mollify(c.h);
        Prepared p{{}, {}, he.values(), spectrum_of(c.h)};
        for (const auto& f : c.G.observables) {
            p.f.push_back(f.values());
            p.fh.push_back((f * he).values());
        }
        prep.push_back(std::move(p));
    }
    const std::size_t n = cfg.samples;
    std::vector<std::vector<detail::IbpSample>> out(cases.size(), std::vector<detail::IbpSample>(n));
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
        return s;
    };
    parallel_for(n, [&](std::size_t i) {
        Stream rng({cfg.seed, 0, i});
        Spectrum spec(geom);
        sampler.sample_spectrum(rng, spec);
        const ScalarField phi0 = field_of(spec);
        const GmcMeasure M = factory.build(phi0);
        detail::SampleMoments s;
        s.total = M.total_mass();
        for (std::size_t c = 0; c < cases.size(); ++c) {
            const auto& p = prep[c];
            s.f.clear();
            s.fh.clear();
            for (std::size_t j = 0; j < p.f.size(); ++j) {
                s.f.push_back(dot(p.f[j], M.masses));
                s.fh.push_back(dot(p.fh[j], M.masses));
            }
            s.h = dot(p.h, M.masses);
            s.gi = grad_inner(spec, p.hs);
            out[c][i] = detail::ibp_sample(cases[c].G, s, cfg);
        }
    });
    std::vector<IbpReport> reports;
    for (std::size_t c = 0; c < cases.size(); ++c) {
        std::vector<double> l(n), r(n), d(n);
        CompensatedSum errs, nodes;
        for (std::size_t i = 0; i < n; ++i) {
            l[i] = out[c][i].lhs;
            r[i] = out[c][i].rhs;
            d[i] = l[i] - r[i];
            errs.add(out[c][i].error);
            nodes.add(out[c][i].nodes);
        }
        const double nn = static_cast<double>(n);
        // Quadrature errors share a sign across samples, so they are added
        // coherently rather than in quadrature.
        const double quad = errs.value() / nn;
        const auto ls = mean_se(l);
        const auto rs = mean_se(r);
        const auto ds = mean_se(d);
        IbpReport rep;
        rep.id = cases[c].id;
        rep.lhs = ls.mean;
        rep.lhs_se = std::hypot(ls.se, quad);
        rep.rhs = rs.mean;
        rep.rhs_se = std::hypot(rs.se, quad);
        rep.diff_se = std::hypot(ds.se, quad);
        rep.quadrature_error = errs.value() / nn;
        rep.z = rep.diff_se > 0.0 ? ds.mean / rep.diff_se : 0.0;
        rep.samples = n;
        rep.nodes = nodes.value() / nn;
        rep.seed = cfg.seed;
        reports.push_back(std::move(rep));
    }
    return reports;
}

inline IbpReport ibp_residual(const TestFunctional& G, const ScalarField& h, const IbpSettings& cfg)
{
    const IbpCase c{"G", G, h};
    return ibp_residuals(std::span<const IbpCase>(&c, 1), cfg).front();
}

/// Fixed catalog: three bump functionals (in M(1); in M(1), M(f1); in M(1),
/// M(f1), M(f2)) against a constant, a single-mode and a localized-bump h.
inline std::vector<IbpCase> reference_catalog(const Geometry& g)
{
    const auto f1 = ScalarField::from_function(g, [](cplx z) { return 1.0 + 0.5 * std::cos(2.0 * std::numbers::pi * z.real()); });
    const auto f2 = ScalarField::from_function(g, [](cplx z) { return 1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * z.imag()); });
    const std::vector<std::pair<std::string, TestFunctional>> gs{
        {"G1", product_bump({{0.2, 3.0}}, {})},
        {"G2", product_bump({{0.2, 3.0}, {0.3, 2.5}}, {f1})},
        {"G3", product_bump({{0.2, 4.0}, {0.1, 4.0}, {0.3, 2.0}}, {f1, f2})},
    };
    const cplx centre(0.5, 0.5);
    const auto local = ScalarField::from_function(g, [&](cplx z) {
        const double r = g->distance(z, centre) / 0.3;
        return detail::bump(r).v;
    });
    const std::vector<std::pair<std::string, ScalarField>> hs{
        {"const", ScalarField::constant(g, 1.0)},
        {"mode", mode_field(g, 1, 0)},
        {"bump", local},
    };
    std::vector<IbpCase> out;
    for (const auto& [gn, G] : gs) {
        for (const auto& [hn, h] : hs) out.push_back({gn + "/" + hn, G, h});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Drift / quadratic variation along SRF trajectories.

struct QvSettings {
    double sigma = 0.25;
    double lambda = 1.0;
    /// Increments per window.
    std::size_t window = 20;
    std::size_t bootstrap = 1000;
    double level = 0.99;
    std::uint64_t seed = 0;
};

/// Per-window sums of one replica, for observables i and pairs (i, j), i <= j.
struct ReplicaWindows {
    struct Window {
        std::vector<double> increment;
        std::vector<double> drift;
        /// Drift integrand at the window start times the window length.
        std::vector<double> drift_start;
        /// Realized and predicted (co)variation per pair in pair_index order.
        std::vector<double> realized;
        std::vector<double> predicted;
        std::vector<double> predicted_start;
    };
    std::vector<Window> windows;
};

/// Index of the unordered pair (i, j) among all pairs with i <= j < k.
inline std::size_t pair_index(std::size_t i, std::size_t j, std::size_t k)
{
    if (i > j) std::swap(i, j);
    return i * k - i * (i - 1) / 2 + (j - i);
}

/// Consumes the rows of one trajectory in order and closes a window every
/// `window` increments. Integrands are taken at the left end of each step.
class WindowBuilder {
public:
    WindowBuilder(std::size_t observables, const QvSettings& cfg)
        : k_(observables), pairs_(observables * (observables + 1) / 2), cfg_(cfg)
    {
        if (cfg.window < 1) throw ConfigError("window >= 1 step required");
        reset();
    }

    void add(const SrfRow& row)
    {
        if (row.value.size() != k_) throw ConfigError("row does not carry the expected observables");
        if (prev_) {
            const double dt = row.t - prev_->t;
            if (count_ == 0) start_ = *prev_;
            for (std::size_t i = 0; i < k_; ++i) {
                const double di = row.value[i] - prev_->value[i];
                cur_.increment[i] += di;
                cur_.drift[i] += drift_rate(*prev_, i) * dt;
                cur_.drift_start[i] += drift_rate(start_, i) * dt;
                for (std::size_t j = i; j < k_; ++j) {
                    const std::size_t p = pair_index(i, j, k_);
                    const double c = 4.0 * cfg_.sigma * cfg_.sigma * dt;
                    cur_.realized[p] += di * (row.value[j] - prev_->value[j]);
                    cur_.predicted[p] += c * product_mass(*prev_, i, j);
                    cur_.predicted_start[p] += c * product_mass(start_, i, j);
                }
            }
            if (++count_ == cfg_.window) {
                out_.windows.push_back(cur_);
                reset();
            }
        }
        prev_ = row;
    }

    /// Completed windows; a trailing partial window is dropped.
    ReplicaWindows finish() { return std::move(out_); }

private:
    double drift_rate(const SrfRow& r, std::size_t i) const { return 2.0 * (r.laplace[i] - cfg_.lambda * r.value[i]); }

    double product_mass(const SrfRow& r, std::size_t i, std::size_t j) const
    {
        if (i == j) return r.square[i];
        // SrfRow pairs are i < j in row-major order.
        const std::size_t idx = i * k_ - i * (i + 1) / 2 + (j - i - 1);
        return r.pair[idx];
    }

    void reset()
    {
        cur_ = {std::vector<double>(k_), std::vector<double>(k_), std::vector<double>(k_),
                std::vector<double>(pairs_), std::vector<double>(pairs_), std::vector<double>(pairs_)};
        count_ = 0;
    }

    std::size_t k_;
    std::size_t pairs_;
    QvSettings cfg_;
    std::optional<SrfRow> prev_;
    SrfRow start_;
    ReplicaWindows::Window cur_;
    std::size_t count_ = 0;
    ReplicaWindows out_;
};

inline ReplicaWindows windows_of(const TrajectoryRecord& rec, std::size_t observables, const QvSettings& cfg)
{
    WindowBuilder b(observables, cfg);
    for (const auto& r : rec.rows) b.add(r);
    return b.finish();
}

struct SlopeReport {
    /// Instrumental-variable fit with intercept.
    double slope = 0.0;
    double intercept = 0.0;
    Interval slope_ci;
    Interval intercept_ci;
    /// Regression through the origin.
    double origin_slope = 0.0;
    Interval origin_ci;
    /// Mean response and its bootstrap interval (for a predictor that is identically 0).
    double mean_response = 0.0;
    Interval mean_ci;
    std::size_t windows = 0;
    std::size_t replicas = 0;
};

struct QvDriftReport {
    std::size_t i = 0;
    std::size_t j = 0;
    /// Realized (co)variation against 4 sigma^2 int A(f_i f_j) ds.
    SlopeReport variation;
    /// Increments against int 2(w0(f Lap phi) - lambda A(f)) ds (i == j only).
    SlopeReport drift;
};

namespace detail {

/// Sums for the instrumental-variable fit y = a + b x with instrument z.
/// The in-window integral x moves with the window's martingale increment,
/// so plain least squares on x is biased; the window-start value z is
/// known at the start of the window and E[z (y - x)] = 0.
struct Moments {
    double n = 0, sx = 0, sy = 0, sz = 0, szx = 0, szy = 0;
    void add(double x, double y, double z)
    {
        n += 1;
        sx += x;
        sy += y;
        sz += z;
        szx += z * x;
        szy += z * y;
    }
    void add(const Moments& o, double w)
    {
        n += w * o.n;
        sx += w * o.sx;
        sy += w * o.sy;
        sz += w * o.sz;
        szx += w * o.szx;
        szy += w * o.szy;
    }
    double slope() const
    {
        const double den = szx - sz * sx / n;
        return std::abs(den) > 0.0 ? (szy - sz * sy / n) / den : std::numeric_limits<double>::quiet_NaN();
    }
    double intercept() const { return (sy - slope() * sx) / n; }
    double origin() const { return std::abs(szx) > 0.0 ? szy / szx : std::numeric_limits<double>::quiet_NaN(); }
    double mean() const { return sy / n; }
};

inline SlopeReport regress(const std::vector<Moments>& per_replica, const QvSettings& cfg, std::uint64_t salt)
{
    Moments all;
    for (const auto& m : per_replica) all.add(m, 1.0);
    if (all.n < 3) throw ConfigError("insufficient windows for regression");
    SlopeReport r;
    r.slope = all.slope();
    r.intercept = all.intercept();
    r.origin_slope = all.origin();
    r.mean_response = all.mean();
    r.windows = static_cast<std::size_t>(all.n);
    r.replicas = per_replica.size();
    auto boot = [&](auto stat) {
        return bootstrap_interval(per_replica.size(), cfg.bootstrap, cfg.seed ^ salt,
                                  [&](std::span<const unsigned> w) {
                                      Moments m;
                                      for (std::size_t k = 0; k < w.size(); ++k) {
                                          if (w[k]) m.add(per_replica[k], w[k]);
                                      }
                                      return stat(m);
                                  },
                                  cfg.level);
    };
    const bool varies = std::isfinite(r.slope);
    if (varies) {
        r.slope_ci = boot([](const Moments& m) { return m.slope(); });
        r.intercept_ci = boot([](const Moments& m) { return m.intercept(); });
    } else {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        r.slope_ci = r.intercept_ci = {nan, nan};
    }
    if (std::isfinite(r.origin_slope)) {
        r.origin_ci = boot([](const Moments& m) { return m.origin(); });
    } else {
        r.origin_ci = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    }
    r.mean_ci = boot([](const Moments& m) { return m.mean(); });
    return r;
}

} // namespace detail

/// Regressions of windowed realized (co)variation and increments of A(f_i)
/// for the pair (i, j); confidence intervals come from a bootstrap over
/// replicas at cfg.level.
inline QvDriftReport qv_drift_regression(std::span<const ReplicaWindows> ensemble, std::size_t observables, std::size_t i,
                                         std::size_t j, const QvSettings& cfg)
{
    if (i >= observables || j >= observables) throw ConfigError("observable index out of range");
    const std::size_t p = pair_index(i, j, observables);
    std::vector<detail::Moments> var(ensemble.size());
    std::vector<detail::Moments> drift(ensemble.size());
    for (std::size_t r = 0; r < ensemble.size(); ++r) {
        for (const auto& w : ensemble[r].windows) {
            var[r].add(w.predicted[p], w.realized[p], w.predicted_start[p]);
            if (i == j) drift[r].add(w.drift[i], w.increment[i], w.drift_start[i]);
        }
    }
    QvDriftReport out;
    out.i = i;
    out.j = j;
    // The same salt for every pair so that (i, i) reproduces the QV report exactly.
    out.variation = detail::regress(var, cfg, 0x9a11);
    if (i == j) out.drift = detail::regress(drift, cfg, 0xd41f7);
    return out;
}

inline QvDriftReport qv_drift_regression(std::span<const ReplicaWindows> ensemble, std::size_t observables, std::size_t i,
                                         const QvSettings& cfg)
{
    return qv_drift_regression(ensemble, observables, i, i, cfg);
}

} // namespace srflab
