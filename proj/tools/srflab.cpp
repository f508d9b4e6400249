// srflab: experiment runner.
//
//   srflab <subcommand> [-c config.ini] [-s section.key=value ...] [-o dir]
//
// Exit status: 0 ok, 1 usage, 2 invalid configuration, 3 blow-up (partial
// outputs kept), 4 IO failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "srflab/config.hpp"
#include "srflab/conventions.hpp"
#include "srflab/expansion.hpp"
#include "srflab/gff.hpp"
#include "srflab/gmc.hpp"
#include "srflab/io.hpp"
#include "srflab/parallel.hpp"
#include "srflab/srf.hpp"
#include "srflab/stats.hpp"
#include "srflab/totalmass.hpp"
#include "srflab/verify.hpp"

#ifndef SRFLAB_VERSION
#define SRFLAB_VERSION "unknown"
#endif

using namespace srflab;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitBlowUp = 3;
constexpr int kExitIo = 4;

struct BlowUp {
    std::size_t replicas = 0;
};

std::string fmt_index(std::size_t i)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04zu", i);
    return buf;
}

json sidecar(const std::string& cmd, const ExperimentConfig& cfg)
{
    return {{"tool", "srflab"}, {"version", SRFLAB_VERSION}, {"subcommand", cmd},
            {"seed", cfg.seed()}, {"config", cfg.to_json()}};
}

void finish(ArtifactDir& dir, json meta)
{
    const auto path = dir.file("run.json");
    meta["outputs"] = dir.files();
    meta["status"] = meta.value("blown_up", 0) > 0 ? "blow-up" : "ok";
    write_json(path, meta);
    dir.write_manifest();
}

// ---------------------------------------------------------------------------

int sample_gff(const ExperimentConfig& cfg, ArtifactDir& dir)
{
    const auto g = cfg.geometry();
    const double sigma = cfg.physics().sigma;
    const GffSampler sampler(g, sigma, cfg.seed());
    const std::size_t n = cfg.replicas();
    if (n < 2) throw ConfigError("run.replicas >= 2 required");
    // The eight lowest nonzero modes of the half spectrum.
    const auto lam = g->eigenvalues();
    // On the k2 = 0 column, k1 and -k1 are conjugates; keep k1 > 0.
    std::vector<std::size_t> order;
    for (std::size_t i = 1; i < lam.size(); ++i) {
        if (i % g->half_columns() != 0 || g->k1_of_row(i / g->half_columns()) > 0) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return lam[a] < lam[b]; });
    order.resize(std::min<std::size_t>(8, order.size()));
    std::vector<std::vector<double>> power(order.size(), std::vector<double>(n));
    const std::size_t keep = std::min(n, cfg.count("gff.write_fields"));
    std::vector<ScalarField> kept(keep, ScalarField(g));
    parallel_for(n, [&](std::size_t r) {
        const auto f = sampler.sample(r);
        const auto s = spectrum_of(f);
        for (std::size_t m = 0; m < order.size(); ++m) power[m][r] = std::norm(s.coeffs[order[m]]);
        if (r < keep) kept[r] = f;
    });
    CsvWriter csv(dir.file("gff_modes.csv"), "gff-modes", {"k1", "k2", "lambda", "target", "empirical", "se"});
    for (std::size_t m = 0; m < order.size(); ++m) {
        const auto ms = mean_se(power[m]);
        const std::size_t i = order[m];
        csv.row(g->k1_of_row(i / g->half_columns()), static_cast<int>(i % g->half_columns()), lam[i],
                sampler.mode_sd(i) * sampler.mode_sd(i), ms.mean, ms.se);
    }
    csv.close();
    for (std::size_t r = 0; r < keep; ++r) {
        const std::string stem = "gff_" + fmt_index(r);
        dir.file(stem + ".bin");
        dir.file(stem + ".json");
        write_field(dir.root() / stem, kept[r], {{"kind", "gff"}, {"sigma", sigma}, {"seed", cfg.seed()}, {"index", r}});
    }
    finish(dir, sidecar("sample-gff", cfg));
    return kExitOk;
}

int build_gmc_cmd(const ExperimentConfig& cfg, ArtifactDir& dir)
{
    const auto g = cfg.geometry();
    const double sigma = cfg.physics().sigma;
    const auto moll = ExperimentConfig::mollifier(cfg.text("gmc.mollifier"), cfg.number("gmc.eps"));
    const GffSampler sampler(g, sigma, cfg.seed());
    const GmcFactory factory(g, sigma, moll);
    const std::size_t n = cfg.replicas();
    const std::size_t keep = std::min(n, cfg.count("gff.write_fields"));
    std::vector<double> totals(n);
    std::vector<std::vector<double>> kept(keep);
    parallel_for(n, [&](std::size_t r) {
        const auto m = factory.build(sampler.sample(r));
        totals[r] = m.total_mass();
        if (r < keep) kept[r] = m.masses;
    });
    CsvWriter csv(dir.file("gmc_totals.csv"), "gmc-totals", {"replica", "total_mass"});
    for (std::size_t r = 0; r < n; ++r) csv.row(r, totals[r]);
    csv.close();
    for (std::size_t r = 0; r < keep; ++r) {
        const std::string stem = "gmc_" + fmt_index(r);
        dir.file(stem + ".bin");
        dir.file(stem + ".json");
        write_field(dir.root() / stem, kept[r], *g,
                    {{"kind", "gmc-masses"}, {"gamma", factory.gamma()}, {"sigma", sigma}, {"eps", moll.eps},
                     {"scheme", to_string(moll.scheme)}, {"seed", cfg.seed()}, {"index", r}});
    }
    auto meta = sidecar("build-gmc", cfg);
    const auto ms = mean_se(totals);
    meta["summary"] = {{"mean_total_mass", ms.mean}, {"se", ms.se}, {"area", g->area()}};
    finish(dir, meta);
    return kExitOk;
}

std::vector<std::string> trajectory_columns(const std::vector<std::string>& names)
{
    std::vector<std::string> cols{"replica", "step", "t", "mass"};
    for (const auto& prefix : {"A", "A_sq", "drift"}) {
        for (std::size_t i = 0; i < names.size(); ++i) cols.push_back(std::string(prefix) + "_" + std::to_string(i));
    }
    return cols;
}

int run_srf(const ExperimentConfig& cfg, ArtifactDir& dir)
{
    const auto g = cfg.geometry();
    const auto c = cfg.srf(g);
    const SrfStepper st(g, c);
    const std::size_t n = cfg.replicas();
    std::vector<std::optional<TrajectoryRecord>> recs(n);
    parallel_for(n, [&](std::size_t r) { recs[r] = st.run(cfg.initial_field(g, c, r), r); });
    const auto names = cfg.observable_names();
    CsvWriter traj(dir.file("trajectories.csv"), "srf-trajectory", trajectory_columns(names));
    CsvWriter sum(dir.file("srf_summary.csv"), "srf-summary",
                  {"replica", "steps", "clamp_events", "blown_up", "absorbed", "event_time", "final_mass"});
    BlowUp blow;
    for (std::size_t r = 0; r < n; ++r) {
        const auto& rec = *recs[r];
        for (const auto& row : rec.rows) {
            std::vector<double> v{static_cast<double>(r), static_cast<double>(row.step), row.t, row.mass};
            v.insert(v.end(), row.value.begin(), row.value.end());
            v.insert(v.end(), row.square.begin(), row.square.end());
            for (std::size_t i = 0; i < row.value.size(); ++i) v.push_back(2.0 * (row.laplace[i] - c.lambda * row.value[i]));
            traj.row(v);
        }
        sum.row(r, rec.final_state.step, rec.clamp_events, rec.blown_up, rec.absorbed, rec.event_time,
                rec.rows.empty() ? 0.0 : rec.rows.back().mass);
        blow.replicas += rec.blown_up ? 1 : 0;
    }
    traj.close();
    sum.close();
    auto meta = sidecar("run-srf", cfg);
    meta["observables"] = names;
    meta["blown_up"] = blow.replicas;
    finish(dir, meta);
    return blow.replicas ? kExitBlowUp : kExitOk;
}

int total_mass(const ExperimentConfig& cfg, ArtifactDir& dir)
{
    const auto m = cfg.total_mass();
    const std::size_t n = cfg.count("total_mass.paths");
    if (n < 1) throw ConfigError("total_mass.paths >= 1 required");
    auto ts = cfg.list("total_mass.laplace_t");
    const auto us = cfg.list("total_mass.laplace_u");
    const auto paths = simulate_mass(m, n, cfg.seed(), ts);
    CsvWriter csv(dir.file("mass_paths.csv"), "mass-paths", {"path", "hit_time", "final", "min", "max"});
    for (std::size_t p = 0; p < n; ++p) csv.row(p, paths.hit_time[p], paths.final_value[p], paths.min_value[p], paths.max_value[p]);
    csv.close();
    const bool closed_form = m.alpha_bar == 0.0 && m.chi == 0.0;
    CsvWriter lap(dir.file("laplace.csv"), "mass-laplace", {"u", "t", "oracle", "monte_carlo", "se", "z"});
    for (std::size_t j = 0; j < paths.record_times.size(); ++j) {
        for (double u : us) {
            std::vector<double> e(n);
            for (std::size_t p = 0; p < n; ++p) e[p] = std::exp(-u * paths.recorded_at(p, j));
            const auto ms = mean_se(e);
            const double o = closed_form ? laplace_oracle(m, u, paths.record_times[j]) : std::nan("");
            lap.row(u, paths.record_times[j], o, ms.mean, ms.se, ms.se > 0.0 ? (ms.mean - o) / ms.se : std::nan(""));
        }
    }
    lap.close();
    auto meta = sidecar("total-mass", cfg);
    json s{{"delta", paths.delta}, {"boundary", to_string(paths.boundary)}, {"hit_fraction", paths.hit_fraction()},
           {"stayed_at_zero", paths.stayed_at_zero}};
    if (paths.delta < 2.0) {
        const auto cdf = [&](double t) { return closed_form ? hitting_cdf(m, t) : besq_hitting_cdf(m, t); };
        const auto ks = ks_one_sample(paths.hit_time, cdf, m.horizon);
        s["ks_distance"] = ks.distance;
        s["ks_p_value"] = ks.p_value;
    }
    meta["summary"] = s;
    finish(dir, meta);
    return kExitOk;
}

int verify_ibp(const ExperimentConfig& cfg, ArtifactDir& dir)
{
    const auto g = cfg.geometry();
    const auto s = cfg.ibp(g);
    const auto cases = reference_catalog(g);
    const auto reps = ibp_residuals(cases, s);
    CsvWriter csv(dir.file("ibp.csv"), "ibp-report",
                  {"identity", "lhs", "lhs_se", "rhs", "rhs_se", "stderr", "z", "n", "nodes", "seed"});
    json rows = json::array();
    for (const auto& r : reps) {
        csv.row(r.id, r.lhs, r.lhs_se, r.rhs, r.rhs_se, r.diff_se, r.z, r.samples, r.nodes, r.seed);
        rows.push_back({{"identity", r.id}, {"lhs", r.lhs}, {"rhs", r.rhs}, {"stderr", r.diff_se}, {"z", r.z},
                        {"n", r.samples}, {"seed", r.seed}});
    }
    csv.close();
    auto meta = sidecar("verify-ibp", cfg);
    meta["reports"] = rows;
    finish(dir, meta);
    return kExitOk;
}

int verify_qv(const ExperimentConfig& cfg, ArtifactDir& dir)
{
    const auto g = cfg.geometry();
    auto c = cfg.srf(g);
    c.record_every = 1;
    const auto q = cfg.qv();
    const SrfStepper st(g, c);
    const std::size_t n = cfg.replicas();
    const std::size_t k = c.observables.size();
    std::vector<ReplicaWindows> ens(n);
    std::vector<unsigned char> blown(n, 0);
    parallel_for(n, [&](std::size_t r) {
        WindowBuilder b(k, q);
        const auto rec = st.run(cfg.initial_field(g, c, r), r, [&](const SrfRow& row) { b.add(row); }, false);
        ens[r] = b.finish();
        blown[r] = rec.blown_up ? 1 : 0;
    });
    CsvWriter csv(dir.file("qv.csv"), "qv-regression",
                  {"i", "j", "kind", "slope", "slope_lo", "slope_hi", "intercept", "intercept_lo", "intercept_hi",
                   "origin_slope", "origin_lo", "origin_hi", "mean", "mean_lo", "mean_hi", "windows", "replicas"});
    auto emit = [&](std::size_t i, std::size_t j, const char* kind, const SlopeReport& s) {
        csv.row(i, j, kind, s.slope, s.slope_ci.lo, s.slope_ci.hi, s.intercept, s.intercept_ci.lo, s.intercept_ci.hi,
                s.origin_slope, s.origin_ci.lo, s.origin_ci.hi, s.mean_response, s.mean_ci.lo, s.mean_ci.hi, s.windows,
                s.replicas);
    };
    for (std::size_t i = 0; i < k; ++i) {
        const auto r = qv_drift_regression(ens, k, i, q);
        emit(i, i, "qv", r.variation);
        emit(i, i, "drift", r.drift);
        for (std::size_t j = i + 1; j < k; ++j) emit(i, j, "covariation", qv_drift_regression(ens, k, i, j, q).variation);
    }
    csv.close();
    std::size_t nb = 0;
    for (auto b : blown) nb += b;
    auto meta = sidecar("verify-qv", cfg);
    meta["observables"] = cfg.observable_names();
    meta["blown_up"] = nb;
    finish(dir, meta);
    return nb ? kExitBlowUp : kExitOk;
}

int expand(const ExperimentConfig& cfg, ArtifactDir& dir)
{
    const auto g = cfg.geometry();
    const auto e = cfg.expansion(g);
    auto c = cfg.srf(g);
    c.sigma = 0.0;
    const auto init = cfg.initial_field(g, c, 0);
    const auto phi0 = solve_phi0(init, e);
    CsvWriter energy(dir.file("phi0_energy.csv"), "phi0-energy", {"step", "t", "dirichlet", "mean"});
    for (std::size_t k = 0; k < phi0.fields.size(); ++k) {
        energy.row(k, phi0.time(k), grad_inner(phi0.fields[k], phi0.fields[k]), phi0.fields[k].mean());
    }
    energy.close();
    BlowUp blow;
    blow.replicas += phi0.blown_up ? 1 : 0;
    const auto sigmas = cfg.list("expand.sigmas");
    const std::size_t n = cfg.replicas();
    std::vector<std::vector<double>> err(sigmas.size(), std::vector<double>(n, std::nan("")));
    std::vector<unsigned char> blown(n, 0);
    if (!phi0.blown_up) {
        parallel_for(n, [&](std::size_t r) {
            const auto phi1 = solve_phi1(phi0, e, r);
            for (std::size_t s = 0; s < sigmas.size(); ++s) {
                const auto ps = solve_srf_coupled(init, e, sigmas[s], r);
                if (ps.blown_up) {
                    blown[r] = 1;
                    continue;
                }
                err[s][r] = expansion_error(ps.final_field(), phi0.final_field(), phi1.final_field(), sigmas[s]);
            }
        });
    }
    CsvWriter csv(dir.file("expansion.csv"), "expansion-error", {"sigma", "replica", "error"});
    std::vector<double> means;
    for (std::size_t s = 0; s < sigmas.size(); ++s) {
        for (std::size_t r = 0; r < n; ++r) csv.row(sigmas[s], r, err[s][r]);
        means.push_back(mean_se(err[s]).mean);
    }
    csv.close();
    for (auto b : blown) blow.replicas += b;
    auto meta = sidecar("expand", cfg);
    meta["blown_up"] = blow.replicas;
    if (sigmas.size() >= 2 && !blow.replicas) meta["loglog_slope"] = loglog_slope(sigmas, means);
    finish(dir, meta);
    return blow.replicas ? kExitBlowUp : kExitOk;
}

void print_error(const char* kind, const std::string& msg)
{
    std::cerr << json{{"error", kind}, {"message", msg}}.dump() << '\n';
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"stochastic Ricci flow numerical lab"};
    app.set_version_flag("--version", SRFLAB_VERSION);
    app.require_subcommand(1);
    std::string config_path;
    std::vector<std::string> overrides;
    std::string output;

    const std::vector<std::pair<std::string, std::string>> runners{
        {"sample-gff", "sample the Gaussian free field"},
        {"build-gmc", "build chaos measures from GFF samples"},
        {"run-srf", "simulate stochastic Ricci flow trajectories"},
        {"total-mass", "simulate the total-mass diffusion"},
        {"verify-ibp", "Liouville integration by parts on the reference catalog"},
        {"verify-qv", "drift and quadratic-variation regressions on SRF trajectories"},
        {"expand", "small-noise expansion phi0 + sigma phi1"},
    };
    std::vector<CLI::App*> subs;
    for (const auto& [name, help] : runners) {
        auto* s = app.add_subcommand(name, help);
        s->add_option("-c,--config", config_path, "config file")->check(CLI::ExistingFile);
        s->add_option("-s,--set", overrides, "override section.key=value");
        s->add_option("-o,--output", output, "output directory (overrides run.output)");
        subs.push_back(s);
    }
    auto* print = app.add_subcommand("print-config", "print the default configuration");
    print->add_option("-c,--config", config_path, "config file to merge")->check(CLI::ExistingFile);
    print->add_option("-s,--set", overrides, "override section.key=value");

    auto* conv = app.add_subcommand("convert-conventions", "convert between (sigma, lambda) and (gamma, mu)");
    double sigma = std::nan("");
    double lambda = 0.0;
    double gamma = std::nan("");
    double mu = 0.0;
    conv->add_option("--sigma", sigma);
    conv->add_option("--lambda", lambda);
    conv->add_option("--gamma", gamma);
    conv->add_option("--mu", mu);

    CLI11_PARSE(app, argc, argv);

    try {
        if (conv->parsed()) {
            const bool from_phi = !std::isnan(sigma);
            if (from_phi == !std::isnan(gamma)) throw ConfigError("give exactly one of --sigma or --gamma");
            json out;
            if (from_phi) {
                const auto x = to_x({sigma, lambda});
                out = {{"gamma", x.gamma}, {"mu", x.mu}};
            } else {
                const auto p = to_phi({gamma, mu});
                out = {{"sigma", p.sigma}, {"lambda", p.lambda}};
            }
            std::cout << std::setprecision(17) << out.dump() << '\n';
            return kExitOk;
        }
        ExperimentConfig cfg = config_path.empty() ? ExperimentConfig() : ExperimentConfig::from_file(config_path);
        for (const auto& o : overrides) {
            const auto eq = o.find('=');
            if (eq == std::string::npos) throw ConfigError("override must be section.key=value, got '" + o + "'");
            cfg.set(o.substr(0, eq), o.substr(eq + 1));
        }
        if (!output.empty()) cfg.set("run.output", output);
        if (print->parsed()) {
            std::cout << (config_path.empty() && overrides.empty() ? default_config_text() : cfg.to_text(true));
            return kExitOk;
        }
        // Validate the pieces every runner shares before touching the disk.
        const auto g = cfg.geometry();
        require_sigma(cfg.physics().sigma);
        const std::string cmd = app.get_subcommands().front()->get_name();
        if (cmd == "run-srf" || cmd == "verify-qv") (void)cfg.srf(g);
        if (cmd == "total-mass") (void)cfg.total_mass();
        if (cmd == "verify-ibp") (void)cfg.ibp(g);
        if (cmd == "verify-qv") (void)cfg.qv();
        if (cmd == "expand") (void)cfg.expansion(g);
        ArtifactDir dir(cfg.output());
        if (cmd == "sample-gff") return sample_gff(cfg, dir);
        if (cmd == "build-gmc") return build_gmc_cmd(cfg, dir);
        if (cmd == "run-srf") return run_srf(cfg, dir);
        if (cmd == "total-mass") return total_mass(cfg, dir);
        if (cmd == "verify-ibp") return verify_ibp(cfg, dir);
        if (cmd == "verify-qv") return verify_qv(cfg, dir);
        if (cmd == "expand") return expand(cfg, dir);
        return 1;
    } catch (const ConfigError& e) {
        print_error("config", e.what());
        return kExitConfig;
    } catch (const GeometryMismatch& e) {
        print_error("config", e.what());
        return kExitConfig;
    } catch (const IoError& e) {
        print_error("io", e.what());
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        print_error("io", e.what());
        return kExitIo;
    }
}
