#pragma once

// Discretized flat torus C/(Z + tau Z): geometry, spectral transforms,
// the Laplacian and integration against the flat area form.
//
// Grid point (j, l), 0 <= j, l < N, sits at z = j/N + (l/N) tau. Field
// values are stored row-major (index j * N + l). Spectra are normalized
// DFT coefficients phi_k = N^-2 sum_x phi(x) e^{-2 pi i (k1 u + k2 v)} in
// the FFTW half-spectrum layout (N rows, N/2 + 1 columns); column l is the
// second mode number k2 = l, row j is k1 = j (j <= N/2) or j - N.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <fftw3.h>

namespace srflab {

using cplx = std::complex<double>;

/// Thrown when two objects living on different tori are combined.
class GeometryMismatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown for parameter values outside a documented bound. The message
/// names the violated bound, e.g. "sigma >= 2*sqrt(pi)".
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

namespace detail {

inline std::mutex& fftw_planner_mutex()
{
    static std::mutex m;
    return m;
}

inline bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

} // namespace detail

class TorusGeometry;
using Geometry = std::shared_ptr<const TorusGeometry>;

/// Flat torus with its spectral Laplacian data. Immutable after
/// construction; safe to share across threads.
class TorusGeometry {
public:
    /// Builds the geometry. Throws ConfigError unless n is a power of two
    /// (n >= 4) and Im(tau) > 0.
    static Geometry make(int n, cplx tau = {0.0, 1.0})
    {
        return Geometry(new TorusGeometry(n, tau));
    }

    TorusGeometry(const TorusGeometry&) = delete;
    TorusGeometry& operator=(const TorusGeometry&) = delete;

    ~TorusGeometry()
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(inverse_);
    }

    int n() const noexcept { return n_; }
    cplx tau() const noexcept { return tau_; }
    /// Total flat area Im(tau).
    double area() const noexcept { return tau_.imag(); }
    double cell_area() const noexcept { return area() / (static_cast<double>(n_) * n_); }
    std::size_t cells() const noexcept { return static_cast<std::size_t>(n_) * n_; }
    std::size_t half_columns() const noexcept { return static_cast<std::size_t>(n_ / 2 + 1); }
    std::size_t modes() const noexcept { return static_cast<std::size_t>(n_) * half_columns(); }
    /// The reference metric is flat.
    static constexpr double gauss_curvature() noexcept { return 0.0; }

    /// -Laplacian eigenvalue of each half-spectrum mode; entry 0 is the
    /// constant mode (eigenvalue 0).
    std::span<const double> eigenvalues() const noexcept { return eigenvalues_; }
    /// Multiplicity of each half-spectrum entry in the full spectrum (1 for
    /// self-conjugate columns, 2 otherwise).
    std::span<const double> mode_weights() const noexcept { return weights_; }

    int k1_of_row(std::size_t j) const noexcept
    {
        const int jj = static_cast<int>(j);
        return jj <= n_ / 2 ? jj : jj - n_;
    }

    /// Half-spectrum index of mode (k1, k2) with 0 <= k2 <= N/2.
    std::size_t mode_index(int k1, int k2) const
    {
        if (k2 < 0 || k2 > n_ / 2) {
            throw std::out_of_range("mode k2 outside the half spectrum");
        }
        const int j = ((k1 % n_) + n_) % n_;
        return static_cast<std::size_t>(j) * half_columns() + static_cast<std::size_t>(k2);
    }

    /// Euclidean position of grid point (j, l).
    cplx point(std::size_t j, std::size_t l) const noexcept
    {
        return static_cast<double>(j) / n_ + (static_cast<double>(l) / n_) * tau_;
    }

    cplx point(std::size_t cell) const noexcept { return point(cell / n_, cell % n_); }

    /// Index of the grid point nearest (in torus distance) to z.
    std::size_t nearest_cell(cplx z) const noexcept
    {
        // Lattice coordinates (u, v) with z = u + v tau.
        const double v = z.imag() / tau_.imag();
        const double u = z.real() - v * tau_.real();
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        const long j0 = std::lround(std::floor(u * n_));
        const long l0 = std::lround(std::floor(v * n_));
        for (long dj = -1; dj <= 2; ++dj) {
            for (long dl = -1; dl <= 2; ++dl) {
                const long j = ((j0 + dj) % n_ + n_) % n_;
                const long l = ((l0 + dl) % n_ + n_) % n_;
                const double d = distance(z, point(static_cast<std::size_t>(j), static_cast<std::size_t>(l)));
                if (d < best_d) {
                    best_d = d;
                    best = static_cast<std::size_t>(j) * n_ + static_cast<std::size_t>(l);
                }
            }
        }
        return best;
    }

    /// Flat torus distance.
    double distance(cplx a, cplx b) const noexcept
    {
        const cplx d = a - b;
        const double v = d.imag() / tau_.imag();
        const double u = d.real() - v * tau_.real();
        const double vr = v - std::round(v);
        const double ur = u - std::round(u);
        double best = std::numeric_limits<double>::infinity();
        for (int p = -1; p <= 1; ++p) {
            for (int q = -1; q <= 1; ++q) {
                best = std::min(best, std::abs((ur + p) + (vr + q) * tau_));
            }
        }
        return best;
    }

    /// Normalized forward transform of a real grid function.
    void forward(std::span<const double> grid, std::span<cplx> spectrum) const
    {
        check_sizes(grid.size(), spectrum.size());
        auto& buf = scratch();
        std::copy(grid.begin(), grid.end(), buf.real);
        fftw_execute_dft_r2c(forward_, buf.real, buf.spec);
        const double scale = 1.0 / static_cast<double>(cells());
        const auto* src = reinterpret_cast<const cplx*>(buf.spec);
        for (std::size_t i = 0; i < spectrum.size(); ++i) {
            spectrum[i] = src[i] * scale;
        }
    }

    /// Inverse transform (synthesis) of a Hermitian half spectrum.
    void inverse(std::span<const cplx> spectrum, std::span<double> grid) const
    {
        check_sizes(grid.size(), spectrum.size());
        auto& buf = scratch();
        std::copy(spectrum.begin(), spectrum.end(), reinterpret_cast<cplx*>(buf.spec));
        fftw_execute_dft_c2r(inverse_, buf.spec, buf.real);
        std::copy(buf.real, buf.real + cells(), grid.begin());
    }

    /// out = inverse(mult * forward(in)) for a real multiplier indexed like
    /// eigenvalues(), in one pass over the spectrum. in and out may alias.
    void filter(std::span<const double> in, std::span<double> out, std::span<const double> mult) const
    {
        check_sizes(in.size(), mult.size());
        check_sizes(out.size(), mult.size());
        auto& buf = scratch();
        std::copy(in.begin(), in.end(), buf.real);
        fftw_execute_dft_r2c(forward_, buf.real, buf.spec);
        const double scale = 1.0 / static_cast<double>(cells());
        for (std::size_t i = 0; i < mult.size(); ++i) {
            const double f = mult[i] * scale;
            buf.spec[i][0] *= f;
            buf.spec[i][1] *= f;
        }
        fftw_execute_dft_c2r(inverse_, buf.spec, buf.real);
        std::copy(buf.real, buf.real + cells(), out.begin());
    }

    bool same_as(const TorusGeometry& other) const noexcept
    {
        return this == &other || (n_ == other.n_ && tau_ == other.tau_);
    }

private:
    TorusGeometry(int n, cplx tau) : n_(n), tau_(tau)
    {
        if (!detail::is_power_of_two(n) || n < 4) {
            throw ConfigError("grid side N must be a power of two >= 4 (got " + std::to_string(n) + ")");
        }
        if (!(tau.imag() > 0.0)) {
            throw ConfigError("Im(tau) > 0 required");
        }
        fill_eigenvalues();
        // Plans run on SIMD-aligned per-thread scratch; FFTW_ESTIMATE keeps
        // the algorithm choice, and so the rounding, identical across runs.
        std::lock_guard lock(detail::fftw_planner_mutex());
        double* grid = fftw_alloc_real(cells());
        fftw_complex* spec = fftw_alloc_complex(modes());
        forward_ = fftw_plan_dft_r2c_2d(n, n, grid, spec, FFTW_ESTIMATE);
        inverse_ = fftw_plan_dft_c2r_2d(n, n, spec, grid, FFTW_ESTIMATE);
        fftw_free(grid);
        fftw_free(spec);
    }

    struct Scratch {
        double* real = nullptr;
        fftw_complex* spec = nullptr;
        std::size_t cells = 0;
        Scratch() = default;
        Scratch(const Scratch&) = delete;
        Scratch& operator=(const Scratch&) = delete;
        ~Scratch()
        {
            fftw_free(real);
            fftw_free(spec);
        }
    };

    // One buffer pair per thread, grown to the largest grid seen.
    Scratch& scratch() const
    {
        thread_local Scratch buf;
        if (buf.cells < cells()) {
            fftw_free(buf.real);
            fftw_free(buf.spec);
            buf.real = fftw_alloc_real(cells());
            buf.spec = fftw_alloc_complex(modes());
            buf.cells = cells();
        }
        return buf;
    }

    // Dual-lattice eigenvalue |2 pi k*|^2 for lattice coordinates (k1, k2).
    double dual_eigenvalue(int k1, int k2) const noexcept
    {
        const double kx = k1;
        const double ky = (k2 - tau_.real() * k1) / tau_.imag();
        return 4.0 * std::numbers::pi * std::numbers::pi * (kx * kx + ky * ky);
    }

    void fill_eigenvalues()
    {
        const std::size_t h = half_columns();
        eigenvalues_.resize(modes());
        weights_.resize(modes());
        const int half = n_ / 2;
        for (std::size_t j = 0; j < static_cast<std::size_t>(n_); ++j) {
            const int k1 = k1_of_row(j);
            for (std::size_t l = 0; l < h; ++l) {
                const int k2 = static_cast<int>(l);
                // Nyquist entries alias +-N/2; take the shortest dual vector so
                // that the multiplier is Hermitian-symmetric.
                double lam = std::numeric_limits<double>::infinity();
                for (int a : {k1, k1 == half ? -half : k1}) {
                    for (int b : {k2, k2 == half ? -half : k2}) {
                        lam = std::min(lam, dual_eigenvalue(a, b));
                    }
                }
                eigenvalues_[j * h + l] = lam;
                weights_[j * h + l] = (l == 0 || static_cast<int>(l) == half) ? 1.0 : 2.0;
            }
        }
        eigenvalues_[0] = 0.0;
    }

    void check_sizes(std::size_t grid, std::size_t spec) const
    {
        if (grid != cells() || spec != modes()) {
            throw GeometryMismatch("buffer size does not match torus grid");
        }
    }

    int n_;
    cplx tau_;
    std::vector<double> eigenvalues_;
    std::vector<double> weights_;
    fftw_plan forward_ = nullptr;
    fftw_plan inverse_ = nullptr;
};

inline void require_same(const TorusGeometry& a, const TorusGeometry& b)
{
    if (!a.same_as(b)) {
        throw GeometryMismatch("objects live on different tori");
    }
}

/// Relative tolerance for the zero-mean part of a field.
inline constexpr double kMeanTolerance = 1e-10;

/// Real field phi = m + phi0 on the grid, stored as the mean m and the
/// zero-mean grid part phi0.
class ScalarField {
public:
    explicit ScalarField(Geometry geometry)
        : geometry_(std::move(geometry)), zero_mean_(geometry_->cells(), 0.0)
    {
    }

    /// Splits arbitrary grid values into mean and zero-mean part.
    static ScalarField from_values(Geometry geometry, std::vector<double> values)
    {
        if (values.size() != geometry->cells()) {
            throw GeometryMismatch("value array does not match torus grid");
        }
        double sum = 0.0;
        double comp = 0.0;
        for (double v : values) {
            const double t = sum + v;
            comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
            sum = t;
        }
        const double mean = (sum + comp) / static_cast<double>(values.size());
        for (auto& v : values) {
            v -= mean;
        }
        ScalarField f(std::move(geometry));
        f.mean_ = mean;
        f.zero_mean_ = std::move(values);
        return f;
    }

    /// Builds from an explicit decomposition; throws if the zero-mean part
    /// violates the mean tolerance.
    static ScalarField from_parts(Geometry geometry, double mean, std::vector<double> zero_mean)
    {
        if (zero_mean.size() != geometry->cells()) {
            throw GeometryMismatch("value array does not match torus grid");
        }
        double sum = 0.0;
        double scale = 1.0;
        for (double v : zero_mean) {
            sum += v;
            scale = std::max(scale, std::abs(v));
        }
        if (std::abs(sum) > kMeanTolerance * scale * static_cast<double>(zero_mean.size())) {
            throw std::invalid_argument("zero-mean part has nonzero sum");
        }
        ScalarField f(std::move(geometry));
        f.mean_ = mean;
        f.zero_mean_ = std::move(zero_mean);
        return f;
    }

    static ScalarField constant(Geometry geometry, double c)
    {
        ScalarField f(std::move(geometry));
        f.mean_ = c;
        return f;
    }

    /// Samples fn(z) at every grid point.
    template <class Fn>
    static ScalarField from_function(Geometry geometry, Fn&& fn)
    {
        std::vector<double> values(geometry->cells());
        for (std::size_t i = 0; i < values.size(); ++i) {
            values[i] = fn(geometry->point(i));
        }
        return from_values(std::move(geometry), std::move(values));
    }

    const Geometry& geometry() const noexcept { return geometry_; }
    double mean() const noexcept { return mean_; }
    std::span<const double> zero_mean_values() const noexcept { return zero_mean_; }
    double value(std::size_t i) const noexcept { return mean_ + zero_mean_[i]; }
    std::size_t size() const noexcept { return zero_mean_.size(); }

    std::vector<double> values() const
    {
        std::vector<double> out(zero_mean_);
        for (auto& v : out) {
            v += mean_;
        }
        return out;
    }

    ScalarField& operator+=(const ScalarField& other)
    {
        require_same(*geometry_, *other.geometry_);
        mean_ += other.mean_;
        for (std::size_t i = 0; i < zero_mean_.size(); ++i) {
            zero_mean_[i] += other.zero_mean_[i];
        }
        return *this;
    }

    ScalarField& operator*=(double a)
    {
        mean_ *= a;
        for (auto& v : zero_mean_) {
            v *= a;
        }
        return *this;
    }

    ScalarField& add_constant(double c)
    {
        mean_ += c;
        return *this;
    }

    friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
    friend ScalarField operator-(ScalarField a, const ScalarField& b)
    {
        ScalarField nb = b;
        nb *= -1.0;
        return a += nb;
    }
    friend ScalarField operator*(double a, ScalarField f) { return f *= a; }

    /// Pointwise product.
    friend ScalarField operator*(const ScalarField& a, const ScalarField& b)
    {
        require_same(*a.geometry_, *b.geometry_);
        std::vector<double> v(a.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = a.value(i) * b.value(i);
        }
        return from_values(a.geometry_, std::move(v));
    }

    /// Pointwise map x -> fn(x).
    template <class Fn>
    ScalarField map(Fn&& fn) const
    {
        std::vector<double> v(size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = fn(value(i));
        }
        return from_values(geometry_, std::move(v));
    }

private:
    Geometry geometry_;
    double mean_ = 0.0;
    std::vector<double> zero_mean_;
};

/// Half spectrum of a field; entry 0 carries the mean.
struct Spectrum {
    Geometry geometry;
    std::vector<cplx> coeffs;

    explicit Spectrum(Geometry g) : geometry(std::move(g)), coeffs(geometry->modes()) {}
};

inline Spectrum spectrum_of(const ScalarField& f)
{
    Spectrum s(f.geometry());
    f.geometry()->forward(f.zero_mean_values(), s.coeffs);
    s.coeffs[0] = f.mean();
    return s;
}

inline ScalarField field_of(const Spectrum& s)
{
    const auto& g = s.geometry;
    std::vector<cplx> c = s.coeffs;
    const double mean = c[0].real();
    c[0] = 0.0;
    std::vector<double> values(g->cells());
    g->inverse(c, values);
    // Remove rounding residue of the excluded mode so the invariant holds.
    double sum = 0.0;
    for (double v : values) {
        sum += v;
    }
    const double r = sum / static_cast<double>(values.size());
    for (auto& v : values) {
        v -= r;
    }
    return ScalarField::from_parts(g, mean, std::move(values));
}

/// Applies a real Fourier multiplier (indexed like eigenvalues()) to f.
/// The multiplier at mode 0 scales the mean.
template <class Multiplier>
ScalarField apply_multiplier(const ScalarField& f, Multiplier&& mult)
{
    Spectrum s = spectrum_of(f);
    const auto lam = f.geometry()->eigenvalues();
    for (std::size_t i = 0; i < s.coeffs.size(); ++i) {
        s.coeffs[i] *= mult(lam[i], i);
    }
    return field_of(s);
}

/// Flat Laplacian, computed spectrally.
inline ScalarField laplacian(const ScalarField& f)
{
    return apply_multiplier(f, [](double lam, std::size_t) { return -lam; });
}

/// Dirichlet inner product int grad h . grad phi dw0 = Im(tau) sum_k lam_k h_k conj(phi_k).
/// Only nonzero modes enter, so both mean parts drop out.
inline double grad_inner(const Spectrum& h, const Spectrum& phi)
{
    require_same(*h.geometry, *phi.geometry);
    const auto lam = h.geometry->eigenvalues();
    const auto w = h.geometry->mode_weights();
    double acc = 0.0;
    for (std::size_t i = 1; i < h.coeffs.size(); ++i) {
        acc += w[i] * lam[i] * (h.coeffs[i].real() * phi.coeffs[i].real() + h.coeffs[i].imag() * phi.coeffs[i].imag());
    }
    return h.geometry->area() * acc;
}

inline double grad_inner(const ScalarField& h, const ScalarField& phi)
{
    require_same(*h.geometry(), *phi.geometry());
    return grad_inner(spectrum_of(h), spectrum_of(phi));
}

/// L2(w0) inner product computed from spectra.
inline double l2_inner(const Spectrum& a, const Spectrum& b)
{
    require_same(*a.geometry, *b.geometry);
    const auto w = a.geometry->mode_weights();
    double acc = 0.0;
    for (std::size_t i = 0; i < a.coeffs.size(); ++i) {
        acc += w[i] * (a.coeffs[i].real() * b.coeffs[i].real() + a.coeffs[i].imag() * b.coeffs[i].imag());
    }
    return a.geometry->area() * acc;
}

/// sum over cells of f(x) * mass(x).
inline double integrate(const ScalarField& f, std::span<const double> masses)
{
    if (masses.size() != f.size()) {
        throw GeometryMismatch("mass array does not match torus grid");
    }
    double acc = 0.0;
    double total = 0.0;
    const auto zm = f.zero_mean_values();
    for (std::size_t i = 0; i < masses.size(); ++i) {
        acc += zm[i] * masses[i];
        total += masses[i];
    }
    return acc + f.mean() * total;
}

/// Integral against the flat area form w0.
inline double integrate(const ScalarField& f)
{
    double acc = 0.0;
    for (double v : f.zero_mean_values()) {
        acc += v;
    }
    const auto& g = *f.geometry();
    return g.cell_area() * acc + f.mean() * g.area();
}

/// Real part of the torus exponential with lattice mode (k1, k2):
/// cos(2 pi (k1 u + k2 v) + phase).
inline ScalarField mode_field(const Geometry& g, int k1, int k2, double phase = 0.0)
{
    const int n = g->n();
    std::vector<double> v(g->cells());
    for (int j = 0; j < n; ++j) {
        for (int l = 0; l < n; ++l) {
            const double arg = 2.0 * std::numbers::pi * (static_cast<double>(k1) * j + static_cast<double>(k2) * l) / n;
            v[static_cast<std::size_t>(j) * n + l] = std::cos(arg + phase);
        }
    }
    return ScalarField::from_values(g, std::move(v));
}

/// Eigenvalue of mode (k1, k2), |k2| <= N/2.
inline double mode_eigenvalue(const TorusGeometry& g, int k1, int k2)
{
    if (k2 < 0) {
        k1 = -k1;
        k2 = -k2;
    }
    return g.eigenvalues()[g.mode_index(k1, k2)];
}

} // namespace srflab
