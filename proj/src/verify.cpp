#include "delaypi/verify.hpp"

#include "delaypi/boundaries.hpp"
#include "delaypi/quasipoly.hpp"
#include "delaypi/sim.hpp"
#include "delaypi/tuning.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

namespace delaypi {

namespace {

struct Check {
    const char* name;
    std::function<bool(std::ostream&)> run;
};

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

bool within(std::ostream& os, const char* label, double value, double target, double tol) {
    const bool ok = std::abs(value - target) <= tol;
    os << label << "=" << fmt(value) << " (target " << fmt(target) << " +/- " << fmt(tol)
       << (ok ? ", ok) " : ", MISS) ");
    return ok;
}

// scale-relative residual of a gain point against the loop spectrum
double point_residual(const LoopConfig& cfg, double sigma, double omega, double kp, double ki) {
    const auto q = assemble_characteristic(cfg.plant, cfg.channel.round_trip(), cfg.scattering,
                                           kp, ki);
    const Complex s(-sigma, omega);
    double scale = 1.0;
    for (const auto& t : q.terms()) {
        Complex p = 0.0;
        for (auto it = t.coeffs.rbegin(); it != t.coeffs.rend(); ++it) p = p * s + *it;
        scale += std::abs(p * std::exp(-t.delay * s));
    }
    return std::abs(q(s)) / scale;
}

// ---- criterion 1: collapse abscissa of the plain delayed loop -------------

bool check_sigma_star_formula(std::ostream& os) {
    return within(os, "sigma*", sigma_star_no_scatter(1.0, 0.1), 6.349, 0.005);
}

// ---- criterion 2: delay-only constants -------------------------------------

bool check_constants(std::ostream& os) {
    const auto uc = universal_constants();
    bool ok = within(os, "eta_sup", uc.eta_sup, 2.3994, 1e-3);
    ok &= within(os, "zeta_min", uc.zeta_min, 0.8336, 1e-3);
    return ok;
}

// ---- criterion 3: constant-impedance bounds --------------------------------

bool check_fixed_d_bound(std::ostream& os) {
    bool ok = within(os, "sigma*_d15", sigma_star_fixed_d(1, 1, 0.1, 15.0).sigma_star, 10.9,
                     0.05);
    ok &= within(os, "sigma*_d1e6", sigma_star_fixed_d(1, 1, 0.1, 1e6).sigma_star, 23.994,
                 0.01);
    return ok;
}

// ---- criterion 4: proportional-impedance branches ---------------------------

bool check_zeta_branches(std::ostream& os) {
    const auto uc = universal_constants();
    bool ok = within(os, "sigma*_z1", sigma_star_zeta(1.0, 0.1), 12.78, 0.05);
    ok &= within(os, "sigma*_zmin", sigma_star_zeta(uc.zeta_min, 0.1), 23.99, 0.05);
    ok &= within(os, "sigma*_z0.5", sigma_star_zeta(0.5, 0.1), 10.0 * std::log(3.0), 1e-6);
    return ok;
}

// ---- criterion 5: triple roots at the collapse points ----------------------

bool check_triple_roots(std::ostream& os) {
    bool ok = true;
    {
        const double ss = sigma_star_no_scatter(1.0, 0.1);
        const auto g = minimal_gains_no_scatter(1, 1, 0.1, ss);
        const auto q = assemble_characteristic({1, 1}, 0.1, ScatteringConfig::none(), g.kp,
                                               g.ki);
        const double scale = 1e-6 * (1.0 + std::abs(q(Complex(0, 0))));
        const auto dq = derivative(q);
        const auto ddq = derivative(dq);
        const double r0 = std::abs(q(Complex(-ss, 0)));
        const double r1 = std::abs(dq(Complex(-ss, 0)));
        const double r2 = std::abs(ddq(Complex(-ss, 0)));
        os << "plain: |p|,|p'|,|p''| = " << fmt(r0) << "," << fmt(r1) << "," << fmt(r2)
           << " (< " << fmt(scale) << ") ";
        ok &= r0 < scale && r1 < scale && r2 < scale;
    }
    {
        const auto star = sigma_star_fixed_d(1, 1, 0.1, 15.0);
        const auto q = assemble_characteristic({1, 1}, 0.1, ScatteringConfig::fixed_d(15.0),
                                               star.gains.kp, star.gains.ki);
        const double scale = 1e-6 * (1.0 + std::abs(q(Complex(0, 0))));
        os << "impedance-15: |p|,|p'|,|p''| = " << fmt(star.p_residual) << ","
           << fmt(star.dp_residual) << "," << fmt(star.ddp_residual) << " (< " << fmt(scale)
           << ")";
        ok &= star.p_residual < scale && star.dp_residual < scale && star.ddp_residual < scale;
    }
    return ok;
}

// ---- criteria 6 and 7: map scenarios ----------------------------------------

struct Scenario {
    LoopConfig cfg;
    double sigma;
    SigmaMapOptions opt;
};

std::vector<Scenario> map_scenarios() {
    // boxes zoomed around the double-root corner of each scenario: the decay
    // regions are elongated bands and coarse lattices leave no interior cells
    const auto uc = universal_constants();
    std::vector<Scenario> out;
    out.push_back({{{1, 1}, {0.05, 0.05}, ScatteringConfig::none()},
                   3.0,
                   {0.0, 10.0, 0.0, 16.0, 32, true}});
    const auto gd = minimal_gains_fixed_d(1, 1, 0.1, 15.0, 7.0).gains;
    out.push_back({{{1, 1}, {0.05, 0.05}, ScatteringConfig::fixed_d(15.0)},
                   7.0,
                   {0.6 * gd.kp, 1.8 * gd.kp, 0.6 * gd.ki, 2.2 * gd.ki, 40, true}});
    const auto gz = minimal_gains_zeta(1, 1, 0.1, uc.zeta_min, 12.0).gains;
    out.push_back({{{1, 1}, {0.05, 0.05}, ScatteringConfig::proportional(uc.zeta_min)},
                   12.0,
                   {0.6 * gz.kp, 2.0 * gz.kp, 0.6 * gz.ki, 2.4 * gz.ki, 40, true}});
    return out;
}

int count_at(const LoopConfig& cfg, double sigma, double kp, double ki) {
    const auto q = assemble_characteristic(cfg.plant, cfg.channel.round_trip(), cfg.scattering,
                                           kp, ki);
    return count_roots_right_of_retry(q, default_root_window(q, sigma).window);
}

bool check_region_oracle(std::ostream& os) {
    std::mt19937 rng(20260808);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    int inside_ok = 0, inside_total = 0;
    int outside_ok = 0, outside_total = 0;

    for (const auto& sc : map_scenarios()) {
        const auto map = build_sigma_map(sc.cfg, sc.sigma, sc.opt);
        const double probe_sigma = sc.sigma - 1e-4;

        // strictly interior region cells
        std::vector<int> interior;
        for (int i = 1; i < map.nx - 1; ++i)
            for (int j = 1; j < map.ny - 1; ++j) {
                bool all = true;
                for (int di = -1; di <= 1 && all; ++di)
                    for (int dj = -1; dj <= 1 && all; ++dj)
                        if (!map.in_region(map.index(i + di, j + dj))) all = false;
                if (all) interior.push_back(map.index(i, j));
            }
        const double wkp = (map.kp_max - map.kp_min) / map.nx;
        const double wki = (map.ki_max - map.ki_min) / map.ny;
        for (int n = 0; n < 17 && !interior.empty(); ++n) {
            const int idx = interior[static_cast<std::size_t>(U(rng) * interior.size()) %
                                     interior.size()];
            const double kp = map.cell_kp(idx % map.nx) + (U(rng) - 0.5) * 0.8 * wkp;
            const double ki = map.cell_ki(idx / map.nx) + (U(rng) - 0.5) * 0.8 * wki;
            ++inside_total;
            try {
                if (count_at(sc.cfg, probe_sigma, kp, ki) == 0) ++inside_ok;
            } catch (const Error&) {
            }
        }

        // points just outside a boundary curve, on its unstable side
        std::vector<std::pair<CurveSample, CurveSample>> segs;
        const double min_norm = 0.02 * std::hypot(map.kp_max - map.kp_min,
                                                  map.ki_max - map.ki_min);
        for (const auto& c : map.curves) {
            if (c.kind == CurveKind::DifferenceOperatorLimit) continue;
            for (std::size_t k = 1; k < c.samples.size(); ++k) {
                const auto& p = c.samples[k - 1];
                const auto& q = c.samples[k];
                const bool in_box = p.kp >= map.kp_min && p.kp <= map.kp_max &&
                                    p.ki >= map.ki_min && p.ki <= map.ki_max;
                if (in_box && std::hypot(p.kp, p.ki) > min_norm) segs.emplace_back(p, q);
            }
        }
        for (int n = 0; n < 17 && !segs.empty(); ++n) {
            const auto& [p, q] =
                segs[static_cast<std::size_t>(U(rng) * segs.size()) % segs.size()];
            const double tx = q.kp - p.kp, ty = q.ki - p.ki;
            const double len = std::hypot(tx, ty);
            if (len == 0.0) continue;
            const double nx = -ty / len, ny = tx / len;
            const double delta = 0.02 * (1.0 + std::hypot(p.kp, p.ki));
            int best = 0;
            bool usable = false;
            for (double side : {+1.0, -1.0}) {
                const double kp = p.kp + side * delta * nx;
                const double ki = p.ki + side * delta * ny;
                if (kp < 0.0 || ki < 0.0) continue;
                try {
                    best = std::max(best, count_at(sc.cfg, probe_sigma, kp, ki));
                    usable = true;
                } catch (const Error&) {
                }
            }
            if (!usable) continue;
            ++outside_total;
            if (best >= 1) ++outside_ok;
        }
    }

    os << "interior " << inside_ok << "/" << inside_total << " clean, near-boundary "
       << outside_ok << "/" << outside_total << " unstable";
    return inside_total >= 45 && inside_ok == inside_total && outside_total >= 45 &&
           outside_ok == outside_total;
}

bool check_boundary_backsubstitution(std::ostream& os) {
    long samples = 0;
    double worst = 0.0;
    for (const auto& sc : map_scenarios()) {
        const auto map = build_sigma_map(sc.cfg, sc.sigma, sc.opt);
        for (const auto& c : map.curves) {
            if (c.kind == CurveKind::DifferenceOperatorLimit) continue;
            for (const auto& s : c.samples) {
                const double r = point_residual(sc.cfg, sc.sigma, s.omega, s.kp, s.ki);
                worst = std::max(worst, r);
                ++samples;
            }
        }
    }
    os << samples << " samples, worst relative residual " << fmt(worst);
    return samples > 500 && worst < 1e-9;
}

// ---- criterion 8: spectra against simulation --------------------------------

bool check_spectral_temporal(std::ostream& os) {
    const auto uc = universal_constants();
    std::mt19937 rng(4242);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const double h = 0.1;

    int ok = 0, total = 0;
    double worst = 0.0;
    for (int n = 0; n < 10; ++n) {
        LoopConfig loop{{1, 1}, {0.05, 0.05}, ScatteringConfig::none()};
        Gains g;
        double sigma;
        if (n % 3 == 0) {
            sigma = 1.5 + U(rng) * (0.8 * sigma_star_no_scatter(1.0, h) - 1.5);
            g = minimal_gains_no_scatter(1, 1, h, sigma);
        } else if (n % 3 == 1) {
            loop.scattering = ScatteringConfig::fixed_d(15.0);
            const double star = sigma_star_fixed_d(1, 1, h, 15.0).sigma_star;
            sigma = 2.0 + U(rng) * (0.8 * star - 2.0);
            g = minimal_gains_fixed_d(1, 1, h, 15.0, sigma).gains;
        } else {
            loop.scattering = ScatteringConfig::proportional(uc.zeta_min);
            sigma = 2.0 + U(rng) * (0.6 * sigma_sup(h) - 2.0);
            g = minimal_gains_zeta(1, 1, h, uc.zeta_min, sigma).gains;
        }

        const auto q = assemble_characteristic({1, 1}, h, loop.scattering, g.kp, g.ki);
        const auto root = rightmost_root(q, default_root_window(q, sigma + 0.5).window);
        if (!root) continue;
        const double rho = std::abs(root->real());

        SimConfig c;
        c.loop = loop;
        c.gains = g;
        c.x0 = 1.0;
        c.dt = h / 200.0;
        c.t_end = std::max(10.0 * h, std::min(20.0 / sigma, 12.0));
        const auto tr = simulate(c);
        const auto est = estimate_decay(tr, std::max(5.0 * h, 10.0 / sigma), tr.t.back());

        ++total;
        const double rel = std::abs(est.sigma_hat - rho) / rho;
        worst = std::max(worst, rel);
        if (rel <= 0.15 && est.r_squared > 0.9) ++ok;
    }
    os << ok << "/" << total << " runs within 15% (worst " << fmt(100.0 * worst) << "%)";
    return total == 10 && ok == total;
}

// ---- criterion 9: delay-free passivity landmark ------------------------------

bool check_passivity_landmark(std::ostream& os) {
    const LoopConfig cfg{{1, 1}, {0.0, 0.0}, ScatteringConfig::none()};
    const auto flat = build_sigma_map(cfg, 0.0, {0.0, 10.0, 0.0, 10.0, 16, true});
    int stable = 0;
    for (int idx = 0; idx < flat.nx * flat.ny; ++idx)
        if (flat.counts[idx] == 0) ++stable;
    const bool all_stable = stable == flat.nx * flat.ny;

    const auto fast = build_sigma_map(cfg, 50.0, {0.0, 150.0, 0.0, 4000.0, 24, true});
    const auto fast_cells = fast.region_cells().size();

    os << "first quadrant " << stable << "/" << flat.nx * flat.ny
       << " cells stable; decay-50 region holds " << fast_cells << " cells";
    return all_stable && fast_cells > 0;
}

// ---- criterion 10: invariance under time rescaling ---------------------------

bool check_nondimensionalization(std::ostream& os) {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> Ua(0.3, 3.0), Ub(0.3, 3.0), Uh(0.02, 0.5),
        Uk(0.0, 6.0), Us(0.05, 3.0);
    int agree = 0, total = 0;
    for (int i = 0; i < 20; ++i) {
        const double a = Ua(rng), b = Ub(rng), hh = Uh(rng);
        const double kp = Uk(rng), ki = Uk(rng);
        const double sigma = Us(rng) * a;
        const auto q =
            assemble_characteristic({a, b}, hh, ScatteringConfig::none(), kp, ki);
        const auto qs = assemble_characteristic({1.0, 1.0}, a * hh, ScatteringConfig::none(),
                                                kp * b / a, ki * b / (a * a));
        const RootWindow w{sigma, 30.0 * a, 20.0 * a};
        const RootWindow ws{sigma / a, 30.0, 20.0};
        ++total;
        try {
            if (count_roots_right_of_retry(q, w) == count_roots_right_of_retry(qs, ws))
                ++agree;
        } catch (const Error&) {
        }
    }
    os << agree << "/" << total << " rescaled pairs agree";
    return agree == total;
}

const Check kChecks[] = {
    {"sigma-star-no-scatter", check_sigma_star_formula},
    {"constants", check_constants},
    {"fixed-d-bound", check_fixed_d_bound},
    {"zeta-branches", check_zeta_branches},
    {"triple-root-certificates", check_triple_roots},
    {"region-oracle-consistency", check_region_oracle},
    {"boundary-backsubstitution", check_boundary_backsubstitution},
    {"spectral-temporal-agreement", check_spectral_temporal},
    {"passivity-landmark", check_passivity_landmark},
    {"nondimensionalization", check_nondimensionalization},
};

}  // namespace

std::vector<std::string> acceptance_check_names() {
    std::vector<std::string> out;
    for (const auto& c : kChecks) out.emplace_back(c.name);
    return out;
}

std::vector<CheckResult> run_acceptance_checks(const std::string& filter) {
    std::vector<CheckResult> results;
    for (const auto& c : kChecks) {
        if (!filter.empty() && std::string(c.name).find(filter) == std::string::npos) continue;
        CheckResult r;
        r.name = c.name;
        std::ostringstream detail;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            r.pass = c.run(detail);
        } catch (const std::exception& e) {
            r.pass = false;
            detail << " threw: " << e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        r.detail = detail.str();
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace delaypi
