#pragma once

// Experiment configuration: a flat sectioned key = value file. Every key has
// a default (see default_config_text()); unknown keys are rejected.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <nlohmann/json.hpp>

#include "conventions.hpp"
#include "expansion.hpp"
#include "gff.hpp"
#include "lattice.hpp"
#include "srf.hpp"
#include "totalmass.hpp"
#include "verify.hpp"

namespace srflab {

namespace detail {

struct KeyDefault {
    const char* key;
    const char* value;
    const char* help;
};

// clang-format off
inline const std::vector<KeyDefault>& config_keys()
{
    static const std::vector<KeyDefault> keys{
        {"run.replicas", "8", "independent replicas (trajectories, GFF samples, ...)"},
        {"run.seed", "1", "global seed; draws use streams keyed by (seed, replica, index)"},
        {"run.output", "srflab-out", "output directory"},
        {"geometry.n", "64", "grid points per side (power of two)"},
        {"geometry.tau_re", "0", "Re(tau)"},
        {"geometry.tau_im", "1", "Im(tau) = area"},
        {"physics.convention", "phi", "phi (sigma, lambda) or x (gamma, mu); total-mass runs in x time, the rest converts"},
        {"physics.sigma", "0.25", "noise strength sigma (gamma in the x convention)"},
        {"physics.lambda", "1", "cosmological constant lambda (mu in the x convention)"},
        {"physics.insertions", "", "x:y:alpha entries separated by ';'"},
        {"scheme.dt", "4e-5", "time step"},
        {"scheme.refresh", "4e-5", "coefficient refresh interval (<= 0 freezes)"},
        {"scheme.horizon", "0.1", "final time T"},
        {"scheme.mollifier", "lattice", "lattice, heat or circle"},
        {"scheme.eps", "0", "mollifier scale"},
        {"scheme.alpha", "0", "renormalization exponent of c"},
        {"scheme.beta", "0", "renormalization exponent of d"},
        {"scheme.increment", "measure", "measure or linear"},
        {"scheme.imex", "variable_implicit", "variable_implicit, coefficient_outside or resolvent_outside"},
        {"scheme.coefficients", "renormalized", "renormalized, raw or flat"},
        {"scheme.solver_tolerance", "1e-6", "relative residual of the implicit solve"},
        {"scheme.record_every", "1", "record every k-th step"},
        {"scheme.blowup_guard", "60", "max |phi| before a trajectory is flagged"},
        {"init.kind", "gff", "gff, flat or mode"},
        {"init.mass", "1", "initial total mass A_0(1)"},
        {"init.amplitude", "0.3", "amplitude of the mode initial condition"},
        {"init.k1", "1", "mode of the mode initial condition"},
        {"init.k2", "0", "mode of the mode initial condition"},
        {"observables.list", "one; mode:1:0; bump:0.25:0.5:0.2; bump:0.75:0.5:0.2",
         "one, mode:k1:k2 (1 + cos/2), bump:x:y:r; separated by ';'"},
        {"gff.write_fields", "1", "sample fields written as binary"},
        {"gmc.mollifier", "heat", "lattice, heat or circle"},
        {"gmc.eps", "0.0625", "mollifier scale"},
        {"total_mass.a0", "1", "A_0"},
        {"total_mass.alpha_bar", "0", "sum of insertion weights"},
        {"total_mass.chi", "0", "Euler characteristic"},
        {"total_mass.paths", "10000", "number of paths"},
        {"total_mass.dt", "1e-4", "time step"},
        {"total_mass.horizon", "1", "horizon"},
        {"total_mass.laplace_u", "0.5, 1, 2, 4", "Laplace arguments u"},
        {"total_mass.laplace_t", "0.1, 0.25, 0.5, 1", "Laplace times t"},
        {"verify.samples", "100000", "GFF samples for the IBP check"},
        {"verify.eps", "0.0625", "heat mollifier scale for the IBP check"},
        {"verify.window", "20", "steps per QV window"},
        {"verify.bootstrap", "1000", "bootstrap resamples"},
        {"verify.level", "0.99", "confidence level"},
        {"expand.sigmas", "0.05, 0.1, 0.2", "noise strengths of the coupled runs"},
        {"expand.dt", "1e-4", "time step"},
        {"expand.horizon", "0.05", "horizon"},
    };
    return keys;
}
// clang-format on

inline std::vector<double> parse_list(const std::string& s)
{
    std::vector<double> out;
    std::vector<std::string> parts;
    boost::split(parts, s, boost::is_any_of(",;"));
    for (auto& p : parts) {
        boost::trim(p);
        if (p.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(p, &used));
            if (used != p.size()) throw std::invalid_argument(p);
        } catch (const std::exception&) {
            throw ConfigError("not a number: '" + p + "'");
        }
    }
    return out;
}

} // namespace detail

/// All settings of one experiment. Keys are "section.name".
class ExperimentConfig {
public:
    ExperimentConfig()
    {
        for (const auto& k : detail::config_keys()) values_[k.key] = k.value;
    }

    static ExperimentConfig from_stream(std::istream& in)
    {
        boost::property_tree::ptree tree;
        try {
            boost::property_tree::ini_parser::read_ini(in, tree);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
        ExperimentConfig c;
        for (const auto& [section, body] : tree) {
            if (body.empty()) throw ConfigError("key '" + section + "' outside a section");
            for (const auto& [name, v] : body) c.set(section + "." + name, v.get_value<std::string>());
        }
        return c;
    }

    static ExperimentConfig from_file(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot read config " + path.string());
        return from_stream(in);
    }

    /// Overrides one key; throws on unknown keys.
    void set(const std::string& key, const std::string& value)
    {
        if (!values_.count(key)) throw ConfigError("unknown config key '" + key + "'");
        values_[key] = boost::trim_copy(value);
    }

    const std::string& text(const std::string& key) const
    {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
        return it->second;
    }

    double number(const std::string& key) const
    {
        const auto v = detail::parse_list(text(key));
        if (v.size() != 1) throw ConfigError(key + " must be a single number");
        return v.front();
    }

    std::vector<double> list(const std::string& key) const { return detail::parse_list(text(key)); }

    std::size_t count(const std::string& key) const
    {
        const double v = number(key);
        if (!(v >= 0.0) || v != std::floor(v)) throw ConfigError(key + " must be a nonnegative integer");
        return static_cast<std::size_t>(v);
    }

    std::uint64_t seed() const { return count("run.seed"); }
    std::size_t replicas() const { return count("run.replicas"); }
    std::filesystem::path output() const { return text("run.output"); }

    Geometry geometry() const
    {
        const double n = number("geometry.n");
        if (n != std::floor(n)) throw ConfigError("geometry.n must be an integer");
        return TorusGeometry::make(static_cast<int>(n), {number("geometry.tau_re"), number("geometry.tau_im")});
    }

    Convention convention() const
    {
        const auto& c = text("physics.convention");
        if (c == "phi") return Convention::phi;
        if (c == "x") return Convention::x;
        throw ConfigError("physics.convention must be phi or x");
    }

    /// sigma and lambda in the phi convention.
    PhiParams physics() const
    {
        if (convention() == Convention::phi) return {number("physics.sigma"), number("physics.lambda")};
        return to_phi({number("physics.sigma"), number("physics.lambda")});
    }

    static Mollifier mollifier(const std::string& scheme, double eps)
    {
        return {mollifier_scheme_from_string(scheme), eps};
    }

    SrfConfig srf(const Geometry& g) const
    {
        SrfConfig c;
        const auto p = physics();
        c.sigma = p.sigma;
        c.lambda = p.lambda;
        c.dt = number("scheme.dt");
        c.refresh = number("scheme.refresh");
        c.horizon = number("scheme.horizon");
        c.mollifier = mollifier(text("scheme.mollifier"), number("scheme.eps"));
        c.alpha = number("scheme.alpha");
        c.beta = number("scheme.beta");
        c.record_every = count("scheme.record_every");
        c.blowup_guard = number("scheme.blowup_guard");
        c.solver_tolerance = number("scheme.solver_tolerance");
        c.seed = seed();
        const auto& inc = text("scheme.increment");
        if (inc == "measure") c.increment = SrfIncrement::measure;
        else if (inc == "linear") c.increment = SrfIncrement::linear;
        else throw ConfigError("scheme.increment must be measure or linear");
        const auto& imex = text("scheme.imex");
        if (imex == "variable_implicit") c.imex = ImexForm::variable_implicit;
        else if (imex == "coefficient_outside") c.imex = ImexForm::coefficient_outside;
        else if (imex == "resolvent_outside") c.imex = ImexForm::resolvent_outside;
        else throw ConfigError("scheme.imex must be variable_implicit, coefficient_outside or resolvent_outside");
        const auto& co = text("scheme.coefficients");
        if (co == "renormalized") c.coefficients = Coefficients::renormalized;
        else if (co == "raw") c.coefficients = Coefficients::raw;
        else if (co == "flat") c.coefficients = Coefficients::flat;
        else throw ConfigError("scheme.coefficients must be renormalized, raw or flat");
        c.insertions = insertions();
        c.observables = observables(g);
        c.validate(*g);
        return c;
    }

    std::vector<Insertion> insertions() const
    {
        std::vector<Insertion> out;
        std::vector<std::string> entries;
        boost::split(entries, text("physics.insertions"), boost::is_any_of(";"));
        for (auto& e : entries) {
            boost::trim(e);
            if (e.empty()) continue;
            std::vector<std::string> f;
            boost::split(f, e, boost::is_any_of(":"));
            if (f.size() != 3) throw ConfigError("insertion must be x:y:alpha, got '" + e + "'");
            const auto v = detail::parse_list(f[0] + "," + f[1] + "," + f[2]);
            out.push_back({{v[0], v[1]}, v[2]});
        }
        return out;
    }

    std::vector<ScalarField> observables(const Geometry& g) const
    {
        std::vector<ScalarField> out;
        for (const auto& spec : observable_names()) {
            std::vector<std::string> f;
            boost::split(f, spec, boost::is_any_of(":"));
            if (f[0] == "one" && f.size() == 1) {
                out.push_back(ScalarField::constant(g, 1.0));
            } else if (f[0] == "mode" && f.size() == 3) {
                const auto k = detail::parse_list(f[1] + "," + f[2]);
                out.push_back(mode_field(g, static_cast<int>(k[0]), static_cast<int>(k[1])).map([](double x) { return 1.0 + 0.5 * x; }));
            } else if (f[0] == "bump" && f.size() == 4) {
                const auto v = detail::parse_list(f[1] + "," + f[2] + "," + f[3]);
                if (!(v[2] > 0.0)) throw ConfigError("bump radius > 0 required");
                const cplx c(v[0], v[1]);
                out.push_back(ScalarField::from_function(g, [&](cplx z) { return detail::bump(g->distance(z, c) / v[2]).v; }));
            } else {
                throw ConfigError("unknown observable '" + spec + "'");
            }
        }
        return out;
    }

    std::vector<std::string> observable_names() const
    {
        std::vector<std::string> out;
        std::vector<std::string> parts;
        boost::split(parts, text("observables.list"), boost::is_any_of(";"));
        for (auto& p : parts) {
            boost::trim(p);
            if (!p.empty()) out.push_back(p);
        }
        return out;
    }

    /// Initial field with A_0(1) = init.mass under the srf measure.
    ScalarField initial_field(const Geometry& g, const SrfConfig& c, std::uint64_t replica) const
    {
        const auto& kind = text("init.kind");
        ScalarField phi(g);
        if (kind == "gff") {
            phi = GffSampler(g, c.sigma, seed()).sample(replica, 0x1417);
        } else if (kind == "mode") {
            phi = number("init.amplitude") *
                  mode_field(g, static_cast<int>(number("init.k1")), static_cast<int>(number("init.k2")));
        } else if (kind != "flat") {
            throw ConfigError("init.kind must be gff, flat or mode");
        }
        const double mass = number("init.mass");
        if (!(mass > 0.0)) throw ConfigError("init.mass > 0 required");
        if (c.sigma == 0.0) {
            const auto e2 = phi.map([](double x) { return std::exp(2.0 * x); });
            phi.add_constant(0.5 * std::log(mass / integrate(e2)));
            return phi;
        }
        return with_total_mass(phi, c.sigma, c.mollifier, mass);
    }

    MassSdeConfig total_mass() const
    {
        MassSdeConfig m;
        m.convention = convention();
        m.coupling = number("physics.sigma");
        m.decay = number("physics.lambda");
        m.alpha_bar = number("total_mass.alpha_bar");
        m.chi = number("total_mass.chi");
        m.a0 = number("total_mass.a0");
        m.dt = number("total_mass.dt");
        m.horizon = number("total_mass.horizon");
        m.validate();
        return m;
    }

    IbpSettings ibp(const Geometry& g) const
    {
        IbpSettings s;
        const auto p = physics();
        s.sigma = p.sigma;
        s.lambda = p.lambda;
        s.mollifier = Mollifier::heat(number("verify.eps"));
        s.samples = count("verify.samples");
        s.seed = seed();
        s.validate(*g);
        return s;
    }

    QvSettings qv() const
    {
        QvSettings q;
        const auto p = physics();
        q.sigma = p.sigma;
        q.lambda = p.lambda;
        q.window = count("verify.window");
        q.bootstrap = count("verify.bootstrap");
        q.level = number("verify.level");
        q.seed = seed();
        if (q.window < 1) throw ConfigError("verify.window >= 1 required");
        if (!(q.level > 0.0 && q.level < 1.0)) throw ConfigError("verify.level in (0, 1) required");
        return q;
    }

    ExpansionConfig expansion(const Geometry& g) const
    {
        ExpansionConfig e;
        e.lambda = physics().lambda;
        e.dt = number("expand.dt");
        e.horizon = number("expand.horizon");
        e.mollifier = mollifier(text("scheme.mollifier"), number("scheme.eps"));
        e.blowup_guard = number("scheme.blowup_guard");
        e.seed = seed();
        e.validate(*g);
        for (double s : list("expand.sigmas")) require_sigma(s);
        return e;
    }

    nlohmann::json to_json() const
    {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& [k, v] : values_) {
            const auto dot = k.find('.');
            j[k.substr(0, dot)][k.substr(dot + 1)] = v;
        }
        return j;
    }

    /// The configuration as a config file.
    std::string to_text(bool with_help = false) const
    {
        std::ostringstream out;
        std::string section;
        for (const auto& k : detail::config_keys()) {
            const std::string key = k.key;
            const auto dot = key.find('.');
            if (key.substr(0, dot) != section) {
                section = key.substr(0, dot);
                out << (out.tellp() > 0 ? "\n" : "") << "[" << section << "]\n";
            }
            if (with_help) out << "; " << k.help << '\n';
            out << key.substr(dot + 1) << " = " << values_.at(key) << '\n';
        }
        return out.str();
    }

private:
    std::map<std::string, std::string> values_;
};

/// The documented defaults as a config file.
inline std::string default_config_text() { return ExperimentConfig().to_text(true); }

} // namespace srflab
