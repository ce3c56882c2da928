// delaypi: sigma-stability maps, PI tuning and time-domain checks for
// first-order plants controlled through a delayed channel.

#include "CLI11.hpp"

#include "delaypi/boundaries.hpp"
#include "delaypi/quasipoly.hpp"
#include "delaypi/sim.hpp"
#include "delaypi/tuning.hpp"
#include "delaypi/verify.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace {

using namespace delaypi;

// shortest round-trip decimal, so repeated runs are byte-identical
std::string num(double v) {
    char buf[48];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

using Manifest = std::vector<std::pair<std::string, std::string>>;

void write_manifest(std::ofstream& os, const Manifest& manifest) {
    for (const auto& [k, v] : manifest) os << "# manifest: " << k << " = " << v << "\n";
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open output file: " + path.string());
    return os;
}

// ---------------------------------------------------------------------------
// shared options
// ---------------------------------------------------------------------------

struct LoopOpts {
    double a = 1.0, b = 1.0;
    double h1 = 0.05, h2 = 0.05;
    double h = -1.0;  // --h convenience, split evenly when set
    std::string mode = "none";
    double d = 0.0;
    double zeta = 0.0;

    void attach(CLI::App* cmd, bool with_mode = true) {
        cmd->set_help_flag("--help", "print this help message and exit");  // frees -h for --h
        cmd->add_option("--a", a, "plant pole a (1/s)")->capture_default_str();
        cmd->add_option("--b", b, "plant input gain b")->capture_default_str();
        auto* oh = cmd->add_option("--h", h, "round-trip delay, split evenly across the channel");
        cmd->add_option("--h1", h1, "forward delay")->capture_default_str()->excludes(oh);
        cmd->add_option("--h2", h2, "return delay")->capture_default_str()->excludes(oh);
        if (with_mode) {
            cmd->add_option("--mode", mode, "channel transformation: none, fixed-d or zeta")
                ->transform(CLI::IsMember({"none", "fixed-d", "zeta"}))
                ->capture_default_str();
            cmd->add_option("--d", d, "impedance for --mode fixed-d");
            cmd->add_option("--zeta", zeta,
                            "impedance ratio for --mode zeta (default: the optimal ratio)");
        }
    }

    LoopConfig resolve() {
        if (h >= 0.0) {
            h1 = 0.5 * h;
            h2 = 0.5 * h;
        }
        LoopConfig cfg;
        cfg.plant = {a, b};
        cfg.channel = {h1, h2};
        if (mode == "none") {
            cfg.scattering = ScatteringConfig::none();
        } else if (mode == "fixed-d") {
            if (!(d > 0.0)) throw InvalidParameter("--mode fixed-d requires --d > 0");
            cfg.scattering = ScatteringConfig::fixed_d(d);
        } else {
            if (zeta == 0.0) zeta = universal_constants().zeta_min;
            cfg.scattering = ScatteringConfig::proportional(zeta);
        }
        cfg.validate();
        return cfg;
    }

    void echo(Manifest& m) const {
        m.emplace_back("mode", mode);
        m.emplace_back("a", num(a));
        m.emplace_back("b", num(b));
        m.emplace_back("h1", num(h1));
        m.emplace_back("h2", num(h2));
        if (d > 0.0) m.emplace_back("d", num(d));
        if (zeta > 0.0) m.emplace_back("zeta", num(zeta));
    }
};

const char* kind_name(CurveKind k) {
    switch (k) {
        case CurveKind::RealRootLine: return "real-root";
        case CurveKind::ComplexPair: return "complex-pair";
        case CurveKind::DifferenceOperatorLimit: return "diff-op-limit";
    }
    return "?";
}

// tuned gains plus diagnostics for any scenario
TuningResult tune_any(const LoopConfig& cfg, double sigma) {
    const double a = cfg.plant.a, b = cfg.plant.b;
    const double h = cfg.channel.round_trip();
    switch (cfg.scattering.mode) {
        case ScatteringMode::FixedD:
            return minimal_gains_fixed_d(a, b, h, cfg.scattering.value, sigma);
        case ScatteringMode::Proportional:
            return minimal_gains_zeta(a, b, h, cfg.scattering.value, sigma);
        case ScatteringMode::None: {
            TuningResult r;
            r.gains = minimal_gains_no_scatter(a, b, h, sigma);
            r.sigma = sigma;
            r.sigma_star = (h > 0.0) ? sigma_star_no_scatter(a, h)
                                     : std::numeric_limits<double>::infinity();
            r.feasible = true;
            const auto q = assemble_characteristic(cfg.plant, h, cfg.scattering, r.gains.kp,
                                                   r.gains.ki);
            const auto dq = derivative(q);
            r.p_residual = std::abs(q(Complex(-sigma, 0)));
            r.dp_residual = std::abs(dq(Complex(-sigma, 0)));
            r.ddp_residual = std::abs(derivative(dq)(Complex(-sigma, 0)));
            r.system_residual = 0.0;
            r.diff_op_margin = std::numeric_limits<double>::quiet_NaN();
            return r;
        }
    }
    throw InvalidParameter("unknown mode");
}

// ---------------------------------------------------------------------------
// map command
// ---------------------------------------------------------------------------

struct MapOpts {
    LoopOpts loop;
    std::vector<double> sigmas{0.0, 2.0, 4.0};
    double kp_min = 0.0, kp_max = 0.0, ki_min = 0.0, ki_max = 0.0;  // 0 max = auto
    int resolution = 32;
    std::string out_dir = ".";
    bool svg = false;
};

void auto_ranges(const LoopConfig& cfg, const std::vector<double>& sigmas, MapOpts& o) {
    // box around the double-root corner of the largest tunable decay request
    double kp_ref = 4.0, ki_ref = 6.0;
    for (auto it = sigmas.rbegin(); it != sigmas.rend(); ++it) {
        if (!(*it > 0.0)) continue;
        try {
            const auto g = tune_any(cfg, *it).gains;
            kp_ref = std::max(kp_ref, g.kp);
            ki_ref = std::max(ki_ref, g.ki);
            break;
        } catch (const Error&) {
            continue;
        }
    }
    if (o.kp_max <= o.kp_min) o.kp_max = 2.5 * kp_ref;
    if (o.ki_max <= o.ki_min) o.ki_max = 3.0 * ki_ref;
}

void render_svg(const std::filesystem::path& path, const std::vector<SigmaMap>& maps,
                const Manifest& manifest) {
    const int W = 900, H = 640, ML = 70, MR = 160, MT = 30, MB = 50;
    const double pw = W - ML - MR, ph = H - MT - MB;
    const auto& front = maps.front();
    const auto X = [&](double kp) {
        return ML + pw * (kp - front.kp_min) / (front.kp_max - front.kp_min);
    };
    const auto Y = [&](double ki) {
        return MT + ph * (1.0 - (ki - front.ki_min) / (front.ki_max - front.ki_min));
    };
    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                             "#ff7f0e", "#8c564b", "#17becf", "#e377c2"};
    const int npal = 8;

    auto os = open_out(path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
    for (const auto& [k, v] : manifest) os << "<!-- " << k << " = " << v << " -->\n";
    os << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";

    for (std::size_t m = 0; m < maps.size(); ++m) {
        const auto& map = maps[m];
        const char* color = palette[m % npal];
        os << "<g fill=\"" << color << "\" fill-opacity=\"0.22\">\n";
        const double wkp = (map.kp_max - map.kp_min) / map.nx;
        const double wki = (map.ki_max - map.ki_min) / map.ny;
        for (int idx : map.region_cells()) {
            const double kp0 = map.kp_min + (idx % map.nx) * wkp;
            const double ki0 = map.ki_min + (idx / map.nx) * wki;
            os << "<rect x=\"" << num(X(kp0)) << "\" y=\"" << num(Y(ki0 + wki)) << "\" width=\""
               << num(pw * wkp / (map.kp_max - map.kp_min)) << "\" height=\""
               << num(ph * wki / (map.ki_max - map.ki_min)) << "\"/>\n";
        }
        os << "</g>\n";
        for (const auto& c : map.curves) {
            const bool dashed = c.kind == CurveKind::DifferenceOperatorLimit;
            // trimmed to the plotted box; splitting at exits keeps polylines clean
            std::vector<std::string> run;
            const auto flush = [&]() {
                if (run.size() >= 2) {
                    os << "<polyline fill=\"none\" stroke=\"" << color
                       << "\" stroke-width=\"1.4\""
                       << (dashed ? " stroke-dasharray=\"6 4\"" : "") << " points=\"";
                    for (const auto& p : run) os << p << " ";
                    os << "\"/>\n";
                }
                run.clear();
            };
            for (const auto& s : c.samples) {
                const bool inside = s.kp >= map.kp_min && s.kp <= map.kp_max &&
                                    s.ki >= map.ki_min && s.ki <= map.ki_max;
                if (!inside) {
                    flush();
                    continue;
                }
                run.push_back(num(X(s.kp)) + "," + num(Y(s.ki)));
            }
            flush();
        }
        os << "<text x=\"" << W - MR + 12 << "\" y=\"" << MT + 18 + 18 * m << "\" fill=\""
           << color << "\" font-size=\"13\">sigma = " << num(map.sigma) << "</text>\n";
    }

    os << "<rect x=\"" << ML << "\" y=\"" << MT << "\" width=\"" << pw << "\" height=\"" << ph
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    os << "<text x=\"" << ML + pw / 2 << "\" y=\"" << H - 14
       << "\" font-size=\"14\" text-anchor=\"middle\">kp</text>\n";
    os << "<text x=\"18\" y=\"" << MT + ph / 2
       << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
       << MT + ph / 2 << ")\">ki</text>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        const double kp = front.kp_min + (front.kp_max - front.kp_min) * tick / 4.0;
        const double ki = front.ki_min + (front.ki_max - front.ki_min) * tick / 4.0;
        os << "<text x=\"" << num(X(kp)) << "\" y=\"" << H - MB + 18
           << "\" font-size=\"11\" text-anchor=\"middle\">" << num(kp) << "</text>\n";
        os << "<text x=\"" << ML - 8 << "\" y=\"" << num(Y(ki) + 4)
           << "\" font-size=\"11\" text-anchor=\"end\">" << num(ki) << "</text>\n";
    }
    os << "</svg>\n";
}

int cmd_map(MapOpts& o) {
    const LoopConfig cfg = o.loop.resolve();
    if (o.resolution < 16) throw InvalidParameter("--resolution must be >= 16");
    auto_ranges(cfg, o.sigmas, o);

    std::filesystem::create_directories(o.out_dir);
    Manifest manifest;
    manifest.emplace_back("command", "map");
    o.loop.echo(manifest);
    {
        std::string list;
        for (double s : o.sigmas) list += (list.empty() ? "" : ",") + num(s);
        manifest.emplace_back("sigmas", list);
    }
    manifest.emplace_back("kp_min", num(o.kp_min));
    manifest.emplace_back("kp_max", num(o.kp_max));
    manifest.emplace_back("ki_min", num(o.ki_min));
    manifest.emplace_back("ki_max", num(o.ki_max));
    manifest.emplace_back("resolution", std::to_string(o.resolution));

    std::vector<SigmaMap> maps;
    for (double s : o.sigmas)
        maps.push_back(build_sigma_map(
            cfg, s, {o.kp_min, o.kp_max, o.ki_min, o.ki_max, o.resolution, true}));

    {
        auto os = open_out(std::filesystem::path(o.out_dir) / "boundaries.csv");
        write_manifest(os, manifest);
        os << "sigma,kind,omega,kp,ki\n";
        for (const auto& map : maps)
            for (const auto& c : map.curves)
                for (const auto& s : c.samples)
                    os << num(map.sigma) << "," << kind_name(c.kind) << "," << num(s.omega)
                       << "," << num(s.kp) << "," << num(s.ki) << "\n";
    }
    {
        auto os = open_out(std::filesystem::path(o.out_dir) / "regions.csv");
        write_manifest(os, manifest);
        os << "sigma,kp,ki,root_count,feasible\n";
        for (const auto& map : maps)
            for (int j = 0; j < map.ny; ++j)
                for (int i = 0; i < map.nx; ++i) {
                    const int idx = map.index(i, j);
                    os << num(map.sigma) << "," << num(map.cell_kp(i)) << ","
                       << num(map.cell_ki(j)) << "," << map.counts[idx] << ","
                       << int(map.feasible[idx]) << "\n";
                }
    }
    if (o.svg)
        render_svg(std::filesystem::path(o.out_dir) / "map.svg", maps, manifest);

    std::size_t region_cells = 0;
    for (const auto& m : maps) region_cells += m.region_cells().size();
    std::printf("wrote %zu maps (%zu verified region cells) to %s\n", maps.size(),
                region_cells, o.out_dir.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// tune / sigma-star / constants
// ---------------------------------------------------------------------------

struct TuneOpts {
    LoopOpts loop;
    double sigma = 1.0;
    bool procedure = false;
    std::string out_dir = ".";
};

int cmd_tune(TuneOpts& o) {
    LoopConfig cfg;
    TuningResult r;
    int certificate = -1;
    if (o.procedure) {
        o.loop.mode = "zeta";
        const auto res = design_procedure(o.loop.a, o.loop.b,
                                          (o.loop.h >= 0.0) ? o.loop.h
                                                            : o.loop.h1 + o.loop.h2,
                                          o.sigma);
        o.loop.zeta = res.scattering.value;
        cfg = o.loop.resolve();
        r = res.tuning;
        certificate = res.certificate_count;
    } else {
        cfg = o.loop.resolve();
        r = tune_any(cfg, o.sigma);
    }

    std::printf("%-14s %s\n", "mode", to_string(cfg.scattering.mode).c_str());
    if (cfg.scattering.mode == ScatteringMode::FixedD)
        std::printf("%-14s %s\n", "d", num(cfg.scattering.value).c_str());
    if (cfg.scattering.mode == ScatteringMode::Proportional)
        std::printf("%-14s %s\n", "zeta", num(cfg.scattering.value).c_str());
    std::printf("%-14s %s\n", "sigma", num(r.sigma).c_str());
    std::printf("%-14s %s\n", "kp", num(r.gains.kp).c_str());
    std::printf("%-14s %s\n", "ki", num(r.gains.ki).c_str());
    std::printf("%-14s %s\n", "sigma_star", num(r.sigma_star).c_str());
    std::printf("%-14s %s\n", "|p(-s)|", num(r.p_residual).c_str());
    std::printf("%-14s %s\n", "|p'(-s)|", num(r.dp_residual).c_str());
    std::printf("%-14s %s\n", "|p''(-s)|", num(r.ddp_residual).c_str());
    if (cfg.scattering.mode != ScatteringMode::None)
        std::printf("%-14s %s\n", "margin", num(r.diff_op_margin).c_str());
    if (certificate >= 0)
        std::printf("%-14s %d roots right of the assigned abscissa\n", "certificate",
                    certificate);

    std::filesystem::create_directories(o.out_dir);
    Manifest manifest;
    manifest.emplace_back("command", o.procedure ? "tune --procedure" : "tune");
    o.loop.echo(manifest);
    manifest.emplace_back("sigma", num(o.sigma));
    auto os = open_out(std::filesystem::path(o.out_dir) / "tuning.csv");
    write_manifest(os, manifest);
    os << "mode,sigma,kp,ki,sigma_star,p_residual,dp_residual,ddp_residual,system_residual,"
          "diff_op_margin,feasible\n";
    os << to_string(cfg.scattering.mode) << "," << num(r.sigma) << "," << num(r.gains.kp)
       << "," << num(r.gains.ki) << "," << num(r.sigma_star) << "," << num(r.p_residual)
       << "," << num(r.dp_residual) << "," << num(r.ddp_residual) << ","
       << num(r.system_residual) << "," << num(r.diff_op_margin) << "," << int(r.feasible)
       << "\n";
    return 0;
}

int cmd_sigma_star(LoopOpts& o) {
    const LoopConfig cfg = o.resolve();
    const double h = cfg.channel.round_trip();
    switch (cfg.scattering.mode) {
        case ScatteringMode::None: {
            const auto br = sigma_star_no_scatter_branches(cfg.plant.a, h);
            std::printf("sigma_star = %s\n", num(br.accepted).c_str());
            std::printf("rejected branch = %s\n", num(br.rejected).c_str());
            break;
        }
        case ScatteringMode::FixedD: {
            const auto r = sigma_star_fixed_d(cfg.plant.a, cfg.plant.b, h,
                                              cfg.scattering.value);
            std::printf("sigma_star = %s\n", num(r.sigma_star).c_str());
            std::printf("collapse gains: kp = %s, ki = %s\n", num(r.gains.kp).c_str(),
                        num(r.gains.ki).c_str());
            break;
        }
        case ScatteringMode::Proportional: {
            std::printf("sigma_star = %s\n",
                        num(sigma_star_zeta(cfg.scattering.value, h)).c_str());
            std::printf("(least upper bound; approached only as the gains grow)\n");
            break;
        }
    }
    return 0;
}

int cmd_constants(double h) {
    const auto uc = universal_constants();
    std::printf("eta_sup  = %s\n", num(uc.eta_sup).c_str());
    std::printf("zeta_min = %s\n", num(uc.zeta_min).c_str());
    if (h > 0.0)
        std::printf("sigma_sup(h=%s) = %s\n", num(h).c_str(), num(sigma_sup(h)).c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimOpts {
    LoopOpts loop;
    double kp = -1.0, ki = -1.0;
    bool auto_tune = false;
    double sigma = 0.0;
    double yref = 0.0, x0 = 1.0, xi0 = 0.0;
    double dt = 0.0, t_end = 0.0;
    std::string out = "trace.csv";
};

double coerce_dt(double requested, double h1, double h2) {
    const auto divides = [&](double dt, double span) {
        if (span == 0.0) return true;
        const double n = std::round(span / dt);
        return n >= 1.0 && std::abs(n * dt - span) <= 1e-9 * std::max(dt, span);
    };
    for (double base : {h1, h2}) {
        if (base <= 0.0) continue;
        const double dt = base / std::max(1.0, std::round(base / requested));
        if (divides(dt, h1) && divides(dt, h2)) return dt;
    }
    if (divides(requested, h1) && divides(requested, h2)) return requested;
    throw InvalidParameter("cannot coerce dt to divide both channel delays; "
                           "pick commensurable --h1/--h2 or an explicit --dt");
}

int cmd_simulate(SimOpts& o) {
    const LoopConfig cfg = o.loop.resolve();
    const double h = cfg.channel.round_trip();

    Gains g;
    if (o.auto_tune) {
        if (!(o.sigma > 0.0)) throw InvalidParameter("--auto-tune needs --sigma > 0");
        g = tune_any(cfg, o.sigma).gains;
    } else {
        if (o.kp < 0.0 || o.ki < 0.0)
            throw InvalidParameter("pass --kp and --ki, or --auto-tune with --sigma");
        g = {o.kp, o.ki};
    }

    SimConfig sc;
    sc.loop = cfg;
    sc.gains = g;
    sc.y_ref = o.yref;
    sc.x0 = o.x0;
    sc.xi0 = o.xi0;
    const double dt_req = (o.dt > 0.0) ? o.dt : ((h > 0.0) ? h / 200.0 : 1e-3);
    sc.dt = (h > 0.0) ? coerce_dt(dt_req, cfg.channel.h1, cfg.channel.h2) : dt_req;
    if (o.t_end > 0.0)
        sc.t_end = o.t_end;
    else if (o.auto_tune)
        sc.t_end = std::max(10.0 * h, std::min(20.0 / o.sigma, 30.0));
    else
        sc.t_end = std::max(10.0 * h, 20.0);

    const auto tr = simulate(sc);

    Manifest manifest;
    manifest.emplace_back("command", "simulate");
    o.loop.echo(manifest);
    manifest.emplace_back("kp", num(g.kp));
    manifest.emplace_back("ki", num(g.ki));
    manifest.emplace_back("yref", num(o.yref));
    manifest.emplace_back("x0", num(o.x0));
    manifest.emplace_back("xi0", num(o.xi0));
    manifest.emplace_back("dt", num(sc.dt));
    manifest.emplace_back("t_end", num(sc.t_end));

    if (auto parent = std::filesystem::path(o.out).parent_path(); !parent.empty())
        std::filesystem::create_directories(parent);
    auto os = open_out(o.out);
    write_manifest(os, manifest);
    const bool scat = tr.mode != ScatteringMode::None;
    os << "t,x,xi,u0,u1,y0,y1";
    if (scat) os << ",s_plus_0,s_minus_1,mu,upsilon";
    os << "\n";
    for (std::size_t i = 0; i < tr.t.size(); ++i) {
        os << num(tr.t[i]) << "," << num(tr.x[i]) << "," << num(tr.xi[i]) << ","
           << num(tr.u0[i]) << "," << num(tr.u1[i]) << "," << num(tr.y0[i]) << ","
           << num(tr.y1[i]);
        if (scat)
            os << "," << num(tr.s_plus_0[i]) << "," << num(tr.s_minus_1[i]) << ","
               << num(tr.mu[i]) << "," << num(tr.upsilon[i]);
        os << "\n";
    }

    std::printf("steps = %zu, dt = %s\n", tr.t.size() - 1, num(sc.dt).c_str());
    std::printf("sigma_hat = %s (R^2 = %s)\n", num(tr.sigma_hat).c_str(),
                num(tr.fit_quality).c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

int cmd_verify(const std::string& filter) {
    const auto results = run_acceptance_checks(filter);
    if (results.empty()) {
        std::printf("no checks match filter '%s'\n", filter.c_str());
        return 1;
    }
    int failures = 0;
    for (const auto& r : results) {
        std::printf("%-28s %s (%.2f s)  %s\n", r.name.c_str(), r.pass ? "PASS" : "FAIL",
                    r.seconds, r.detail.c_str());
        if (!r.pass) ++failures;
    }
    std::printf("%zu/%zu checks passed\n", results.size() - failures, results.size());
    return failures == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sigma-stability maps, PI tuning and simulation for first-order plants "
                 "behind a delayed channel"};
    app.set_help_flag("--help", "print this help message and exit");
    app.require_subcommand(1);
    app.set_config("--config", "", "configuration file with key = value lines");

    int status = 0;

    MapOpts map_opts;
    auto* map_cmd = app.add_subcommand("map", "boundary curves and verified decay regions");
    map_opts.loop.attach(map_cmd);
    map_cmd->add_option("--sigmas", map_opts.sigmas, "decay abscissas, comma separated")
        ->delimiter(',')
        ->capture_default_str();
    map_cmd->add_option("--kp-min", map_opts.kp_min)->capture_default_str();
    map_cmd->add_option("--kp-max", map_opts.kp_max, "0 = choose from the tuned corner");
    map_cmd->add_option("--ki-min", map_opts.ki_min)->capture_default_str();
    map_cmd->add_option("--ki-max", map_opts.ki_max, "0 = choose from the tuned corner");
    map_cmd->add_option("--resolution", map_opts.resolution, "lattice cells per axis (>= 16)")
        ->capture_default_str();
    map_cmd->add_option("--out-dir", map_opts.out_dir)->capture_default_str();
    map_cmd->add_flag("--svg", map_opts.svg, "also render map.svg");
    map_cmd->callback([&]() { status = cmd_map(map_opts); });

    TuneOpts tune_opts;
    auto* tune_cmd = app.add_subcommand("tune", "minimal gains assigning a decay rate");
    tune_opts.loop.attach(tune_cmd);
    tune_cmd->add_option("--sigma", tune_opts.sigma, "decay abscissa to assign")->required();
    tune_cmd->add_flag("--procedure", tune_opts.procedure,
                       "full recipe: optimal impedance ratio plus minimal gains");
    tune_cmd->add_option("--out-dir", tune_opts.out_dir)->capture_default_str();
    tune_cmd->callback([&]() { status = cmd_tune(tune_opts); });

    LoopOpts star_opts;
    auto* star_cmd = app.add_subcommand("sigma-star", "maximal achievable decay of a scenario");
    star_opts.attach(star_cmd);
    star_cmd->callback([&]() { status = cmd_sigma_star(star_opts); });

    double const_h = 0.0;
    auto* const_cmd = app.add_subcommand("constants", "delay-only design constants");
    const_cmd->set_help_flag("--help", "print this help message and exit");
    const_cmd->add_option("--h", const_h, "also print the decay limit for this round trip");
    const_cmd->callback([&]() { status = cmd_constants(const_h); });

    SimOpts sim_opts;
    auto* sim_cmd = app.add_subcommand("simulate", "fixed-step run of the closed loop");
    sim_opts.loop.attach(sim_cmd);
    sim_cmd->add_option("--kp", sim_opts.kp, "proportional gain");
    sim_cmd->add_option("--ki", sim_opts.ki, "integral gain");
    sim_cmd->add_flag("--auto-tune", sim_opts.auto_tune, "use minimal gains for --sigma");
    sim_cmd->add_option("--sigma", sim_opts.sigma, "decay abscissa for --auto-tune");
    sim_cmd->add_option("--yref", sim_opts.yref)->capture_default_str();
    sim_cmd->add_option("--x0", sim_opts.x0)->capture_default_str();
    sim_cmd->add_option("--xi0", sim_opts.xi0)->capture_default_str();
    sim_cmd->add_option("--dt", sim_opts.dt, "0 = h/200, coerced onto the delay grid");
    sim_cmd->add_option("--t-end", sim_opts.t_end, "0 = choose from the decay request");
    sim_cmd->add_option("--out", sim_opts.out, "trace file")->capture_default_str();
    sim_cmd->callback([&]() { status = cmd_simulate(sim_opts); });

    std::string filter;
    auto* verify_cmd = app.add_subcommand("verify", "run the verification suite");
    verify_cmd->add_option("--filter", filter, "run only checks whose name contains this");
    verify_cmd->callback([&]() { status = cmd_verify(filter); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const InvalidParameter& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const OutOfRange& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const Error& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 2;
    }
    return status;
}
