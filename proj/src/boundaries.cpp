#include "delaypi/boundaries.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>
#include <thread>

namespace delaypi {

namespace {

double sinc(double x) {
    if (std::abs(x) < 1e-4) {
        const double x2 = x * x;
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
    }
    return std::sin(x) / x;
}

struct Quadratic {
    double c2, c1, c0;
};

// exact coefficients of a function known to be a polynomial of degree <= 2
Quadratic quadratic_from(const std::function<double(double)>& f) {
    const double f0 = f(0.0), fp = f(1.0), fm = f(-1.0);
    return {0.5 * (fp + fm) - f0, 0.5 * (fp - fm), f0};
}

// real solutions, smallest first; degenerates to the linear remnant when the
// leading coefficient underflows relative to the others
std::vector<double> solve_quadratic(const Quadratic& q) {
    const double scale = std::max({std::abs(q.c2), std::abs(q.c1), std::abs(q.c0)});
    if (scale == 0.0) return {};
    if (std::abs(q.c2) < 1e-12 * scale) {
        if (std::abs(q.c1) < 1e-14 * scale) return {};
        return {-q.c0 / q.c1};
    }
    const double disc = q.c1 * q.c1 - 4.0 * q.c2 * q.c0;
    if (disc < 0.0) throw NoRealRoot(disc);
    const double sq = std::sqrt(disc);
    const double u = (q.c1 >= 0.0) ? (-q.c1 - sq) / 2.0 : (-q.c1 + sq) / 2.0;
    std::vector<double> roots;
    if (u != 0.0) {
        roots.push_back(u / q.c2);
        roots.push_back(q.c0 / u);
    } else {
        roots.push_back(0.0);
        roots.push_back(-q.c1 / q.c2);
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

void require_scattering_delay(const LoopConfig& config) {
    if (config.scattering.mode != ScatteringMode::None && config.channel.round_trip() <= 0.0)
        throw InvalidParameter("scattering boundaries require a delay channel (h > 0)");
}

}  // namespace

// ---------------------------------------------------------------------------
// real-root boundary
// ---------------------------------------------------------------------------

double real_root_line(const LoopConfig& config, double sigma, double kp) {
    config.validate();
    require_scattering_delay(config);
    const double a = config.plant.a, b = config.plant.b;
    const double h = config.channel.round_trip();
    const double E = std::exp(h * sigma);
    const double a_s = a - sigma;

    switch (config.scattering.mode) {
        case ScatteringMode::None:
            return sigma * kp + sigma * a_s / (b * E);
        case ScatteringMode::FixedD:
        case ScatteringMode::Proportional: {
            const double d = config.scattering.effective_d(kp);
            const double den = (1.0 - E) * a_s + (1.0 + E) * b * d;
            const double den_scale = std::abs((1.0 - E) * a_s) + std::abs((1.0 + E) * b * d);
            if (std::abs(den) <= 1e-12 * std::max(1.0, den_scale))
                throw DegenerateDenominator(sigma);
            const double num = (1.0 + E) * a_s + (1.0 - E) * b * d;
            return sigma * kp + sigma * d * num / den;
        }
    }
    throw InvalidParameter("unknown scattering mode");
}

// ---------------------------------------------------------------------------
// complex-pair boundary
// ---------------------------------------------------------------------------

BoundaryKernel kernel(const PlantParams& plant, double h, double d, double sigma, double omega) {
    const double a = plant.a, b = plant.b;
    const double E = std::exp(h * sigma);
    const double a_s = a - sigma;
    const double a_2s = a - 2.0 * sigma;
    BoundaryKernel k;
    k.alpha = 1.0 + E * std::cos(h * omega);
    k.beta = 1.0 - E * std::cos(h * omega);
    k.gamma = E * std::sin(h * omega);
    const double bd = b * d;
    const double w2 = sigma * a_s + omega * omega;
    k.A11 = (k.gamma * omega - k.alpha * sigma) * bd - k.beta * w2 - k.gamma * omega * a_2s;
    k.A12 = k.alpha * bd + k.beta * a_s - k.gamma * omega;
    k.A21 = (k.gamma * sigma + k.alpha * omega) * bd - k.gamma * w2 + k.beta * omega * a_2s;
    k.A22 = -k.gamma * bd + k.gamma * a_s + k.beta * omega;
    k.B1 = (k.beta * sigma + k.gamma * omega) * bd + k.alpha * w2 - k.gamma * omega * a_2s;
    k.B2 = (k.gamma * sigma - k.beta * omega) * bd - k.gamma * w2 - k.alpha * omega * a_2s;
    return k;
}

BoundaryKernel kernel(const LoopConfig& config, double sigma, double omega) {
    config.validate();
    require_scattering_delay(config);
    if (config.scattering.mode == ScatteringMode::None)
        throw InvalidParameter("kernel is defined for the scattering modes only");
    if (config.scattering.mode == ScatteringMode::Proportional)
        throw InvalidParameter("proportional mode needs an explicit candidate d; "
                               "use kernel(plant, h, d, sigma, omega)");
    return kernel(config.plant, config.channel.round_trip(), config.scattering.value, sigma,
                  omega);
}

namespace {

std::optional<Gains> solve_kernel(const BoundaryKernel& k, double d) {
    const double det = k.A11 * k.A22 - k.A12 * k.A21;
    const double det_scale = std::abs(k.A11 * k.A22) + std::abs(k.A12 * k.A21);
    if (std::abs(det) <= 1e-13 * std::max(1.0, det_scale)) return std::nullopt;
    const double kp = d * (k.B1 * k.A22 - k.A12 * k.B2) / det;
    const double ki = d * (k.A11 * k.B2 - k.B1 * k.A21) / det;
    return Gains{kp, ki};
}

// |A| + zeta |[A2 B]| with impedance d; vanishes on the proportional-mode
// boundary once d = zeta kp
double proportional_cramer(const PlantParams& plant, double h, double zeta, double sigma,
                           double omega, double d) {
    const BoundaryKernel k = kernel(plant, h, d, sigma, omega);
    const double detA = k.A11 * k.A22 - k.A12 * k.A21;
    const double detA2B = k.A12 * k.B2 - k.A22 * k.B1;
    return detA + zeta * detA2B;
}

}  // namespace

std::vector<Gains> complex_boundary(const LoopConfig& config, double sigma, double omega) {
    config.validate();
    require_scattering_delay(config);
    if (!(omega > 0.0)) throw InvalidParameter("complex boundary needs omega > 0");
    const double a = config.plant.a, b = config.plant.b;
    const double h = config.channel.round_trip();

    switch (config.scattering.mode) {
        case ScatteringMode::None: {
            const double E = std::exp(h * sigma);
            const double a_s = a - sigma;
            const double a_2s = a - 2.0 * sigma;
            const double c = std::cos(h * omega);
            const double hs = h * sinc(h * omega);  // sin(h w)/w without the 0/0
            const double kp = (-a_2s * c + (sigma * a_s + omega * omega) * hs) / (b * E);
            const double ki =
                (sigma * sigma + omega * omega) * (c + a_s * hs) / (b * E);
            return {Gains{kp, ki}};
        }
        case ScatteringMode::FixedD: {
            const double d = config.scattering.value;
            const BoundaryKernel k = kernel(config.plant, h, d, sigma, omega);
            auto g = solve_kernel(k, d);
            if (!g) throw SingularSystem(k.A11 * k.A22 - k.A12 * k.A21);
            return {*g};
        }
        case ScatteringMode::Proportional: {
            const double zeta = config.scattering.value;
            const auto quad = quadratic_from([&](double d) {
                return proportional_cramer(config.plant, h, zeta, sigma, omega, d);
            });
            std::vector<Gains> out;
            for (double d : solve_quadratic(quad)) {
                const double kp = d / zeta;
                if (!(kp > 0.0)) continue;
                const BoundaryKernel k = kernel(config.plant, h, d, sigma, omega);
                double ki;
                if (std::abs(k.A12) > 1e-12 * (1.0 + std::abs(k.A11 * kp))) {
                    ki = (d * k.B1 - k.A11 * kp) / k.A12;
                } else if (std::abs(k.A22) > 1e-12 * (1.0 + std::abs(k.A21 * kp))) {
                    ki = (d * k.B2 - k.A21 * kp) / k.A22;
                } else {
                    continue;
                }
                out.push_back(Gains{kp, ki});
            }
            std::sort(out.begin(), out.end(),
                      [](const Gains& x, const Gains& y) { return x.kp < y.kp; });
            return out;
        }
    }
    throw InvalidParameter("unknown scattering mode");
}

// ---------------------------------------------------------------------------
// map assembly
// ---------------------------------------------------------------------------

namespace {

struct Box {
    double kp_lo, kp_hi, ki_lo, ki_hi;
    bool contains(const CurveSample& s) const {
        return s.kp >= kp_lo && s.kp <= kp_hi && s.ki >= ki_lo && s.ki <= ki_hi;
    }
};

double sample_dist(const CurveSample& p, const CurveSample& q) {
    return std::hypot(p.kp - q.kp, p.ki - q.ki);
}

using PointGen = std::function<std::optional<CurveSample>(double omega)>;

void refine_segment(const PointGen& gen, const CurveSample& a, const CurveSample& b,
                    double max_gap, const Box& box, int depth, std::vector<CurveSample>& out) {
    const bool relevant = box.contains(a) || box.contains(b);
    if (depth >= 16 || !relevant || sample_dist(a, b) <= max_gap ||
        (b.omega - a.omega) <= 1e-12 * (1.0 + b.omega)) {
        out.push_back(b);
        return;
    }
    const auto mid = gen(0.5 * (a.omega + b.omega));
    if (!mid) {
        out.push_back(b);
        return;
    }
    refine_segment(gen, a, *mid, max_gap, box, depth + 1, out);
    refine_segment(gen, *mid, b, max_gap, box, depth + 1, out);
}

// walk a seed grid, closing the polyline at parameter gaps
void trace_curves(CurveKind kind, double sigma, const PointGen& gen,
                  const std::vector<double>& seeds, double max_gap, const Box& box,
                  std::vector<BoundaryCurve>& curves) {
    std::vector<CurveSample> run;
    const auto flush = [&]() {
        if (run.size() >= 2) curves.push_back({kind, sigma, run});
        run.clear();
    };
    for (double w : seeds) {
        auto p = gen(w);
        if (!p || !std::isfinite(p->kp) || !std::isfinite(p->ki)) {
            flush();
            continue;
        }
        if (run.empty()) {
            run.push_back(*p);
        } else {
            std::vector<CurveSample> chunk;
            refine_segment(gen, run.back(), *p, max_gap, box, 0, chunk);
            run.insert(run.end(), chunk.begin(), chunk.end());
        }
    }
    flush();
}

unsigned worker_count(bool parallel, int cells) {
    if (!parallel) return 1;
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    return std::min<unsigned>(hw, std::max(1, cells / 8));
}

}  // namespace

std::vector<int> SigmaMap::region_cells() const {
    std::vector<int> out;
    for (int idx = 0; idx < nx * ny; ++idx)
        if (in_region(idx)) out.push_back(idx);
    return out;
}

SigmaMap build_sigma_map(const LoopConfig& config, double sigma, const SigmaMapOptions& opt) {
    config.validate();
    require_scattering_delay(config);
    if (opt.resolution < 16) throw InvalidParameter("map resolution must be >= 16 per axis");
    if (!(opt.kp_max > opt.kp_min) || !(opt.ki_max > opt.ki_min))
        throw InvalidParameter("map gain ranges are empty");
    if (opt.kp_min < 0.0 || opt.ki_min < 0.0)
        throw InvalidParameter("map gain ranges must be nonnegative");

    SigmaMap map;
    map.config = config;
    map.sigma = sigma;
    map.kp_min = opt.kp_min;
    map.kp_max = opt.kp_max;
    map.ki_min = opt.ki_min;
    map.ki_max = opt.ki_max;
    map.nx = map.ny = opt.resolution;

    const double a = config.plant.a, b = config.plant.b;
    const double h = config.channel.round_trip();
    const double kp_span = opt.kp_max - opt.kp_min, ki_span = opt.ki_max - opt.ki_min;
    const double cell_diag = std::hypot(kp_span / map.nx, ki_span / map.ny);
    const Box box{opt.kp_min - 0.75 * kp_span, opt.kp_max + 0.75 * kp_span,
                  opt.ki_min - 0.75 * ki_span, opt.ki_max + 0.75 * ki_span};

    // --- curves -----------------------------------------------------------

    {  // real-root locus, parametrized by kp
        std::vector<double> kps;
        const int n = 2 * opt.resolution;
        for (int i = 0; i <= n; ++i) kps.push_back(opt.kp_min + kp_span * i / n);
        const PointGen gen = [&](double kp) -> std::optional<CurveSample> {
            try {
                return CurveSample{kp, real_root_line(config, sigma, kp), 0.0};
            } catch (const Error&) {
                return std::nullopt;
            }
        };
        // reuse the tracer with kp playing the parameter role
        std::vector<BoundaryCurve> traced;
        trace_curves(CurveKind::RealRootLine, sigma, gen, kps, cell_diag, box, traced);
        for (auto& c : traced) {
            for (auto& s : c.samples) s.omega = 0.0;
            map.curves.push_back(std::move(c));
        }
    }

    {  // complex-pair locus, parametrized by omega
        double omega_hi;
        if (h > 0.0)
            omega_hi = 40.0 * std::numbers::pi / h;
        else
            omega_hi = std::abs(sigma) + a + std::sqrt(std::max(0.0, 2.0 * b * opt.ki_max)) + 10.0;
        const double omega_lo = omega_hi * 1e-7;
        std::vector<double> seeds;
        const int n_seed = 160;
        for (int i = 0; i <= n_seed; ++i)
            seeds.push_back(omega_lo * std::pow(omega_hi / omega_lo,
                                                static_cast<double>(i) / n_seed));

        if (config.scattering.mode == ScatteringMode::Proportional) {
            for (int branch = 0; branch < 2; ++branch) {
                const PointGen gen = [&, branch](double w) -> std::optional<CurveSample> {
                    try {
                        auto sols = complex_boundary(config, sigma, w);
                        if (static_cast<int>(sols.size()) <= branch) return std::nullopt;
                        return CurveSample{sols[static_cast<std::size_t>(branch)].kp,
                                           sols[static_cast<std::size_t>(branch)].ki, w};
                    } catch (const Error&) {
                        return std::nullopt;
                    }
                };
                trace_curves(CurveKind::ComplexPair, sigma, gen, seeds, cell_diag, box,
                             map.curves);
            }
        } else {
            const PointGen gen = [&](double w) -> std::optional<CurveSample> {
                try {
                    auto sols = complex_boundary(config, sigma, w);
                    if (sols.empty()) return std::nullopt;
                    return CurveSample{sols[0].kp, sols[0].ki, w};
                } catch (const Error&) {
                    return std::nullopt;
                }
            };
            trace_curves(CurveKind::ComplexPair, sigma, gen, seeds, cell_diag, box, map.curves);
        }
    }

    if (config.scattering.mode == ScatteringMode::FixedD && sigma > 0.0) {
        // gain interval where the delayed-difference part stays stable:
        // vertical lines in the (kp, ki) plane
        const double d = config.scattering.value;
        const double E = std::exp(h * sigma);
        const double lines[2] = {d * (E - 1.0) / (E + 1.0), d * (E + 1.0) / (E - 1.0)};
        for (double kp : lines) {
            if (!std::isfinite(kp)) continue;
            BoundaryCurve c{CurveKind::DifferenceOperatorLimit, sigma, {}};
            const int n = opt.resolution;
            for (int j = 0; j <= n; ++j)
                c.samples.push_back({kp, opt.ki_min + ki_span * j / n, 0.0});
            map.curves.push_back(std::move(c));
        }
    }

    // --- lattice classification -------------------------------------------

    const int cells = map.nx * map.ny;
    map.counts.assign(cells, -1);
    map.margins.assign(cells, 1.0);
    map.feasible.assign(cells, 1);

    const double chain_omega = (h > 0.0) ? 40.0 * std::numbers::pi / h : 0.0;
    const auto classify = [&](int idx) {
        const int i = idx % map.nx, j = idx / map.nx;
        const double kp = map.cell_kp(i), ki = map.cell_ki(j);

        double margin = 1.0;
        if (config.scattering.mode != ScatteringMode::None) {
            const double d = config.scattering.effective_d(kp);
            if (d > 0.0) {
                margin = difference_operator_ok(d, kp, h, sigma).margin;
            } else {
                margin = -1.0;  // degenerate impedance
            }
        }
        map.margins[idx] = margin;
        map.feasible[idx] = margin > 0.0 ? 1 : 0;

        try {
            const auto q = assemble_characteristic(config.plant, h, config.scattering, kp, ki);
            auto sw = default_root_window(q, sigma);
            RootWindow w = sw.window;
            if (chain_omega > 0.0)
                w.omega_max = std::clamp(w.omega_max, chain_omega, 8.0 * chain_omega);
            map.counts[idx] = count_roots_right_of_retry(q, w);
        } catch (const Error&) {
            map.counts[idx] = -1;  // unresolved cell, excluded from the region
        }
    };

    const unsigned workers = worker_count(opt.parallel, cells);
    if (workers <= 1) {
        for (int idx = 0; idx < cells; ++idx) classify(idx);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned t = 0; t < workers; ++t)
            pool.emplace_back([&]() {
                for (int idx = next.fetch_add(1); idx < cells; idx = next.fetch_add(1))
                    classify(idx);
            });
        for (auto& th : pool) th.join();
    }

    return map;
}

}  // namespace delaypi
