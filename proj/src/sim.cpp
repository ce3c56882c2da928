#include "delaypi/sim.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

namespace delaypi {

namespace {

long exact_steps(double interval, double dt, const char* what) {
    const long n = std::lround(interval / dt);
    if (std::abs(n * dt - interval) > 1e-9 * std::max(dt, interval))
        throw InvalidParameter(std::string("dt must divide ") + what + " exactly");
    return n;
}

// delayed-signal line. The carried signal jumps at the t = 0 seam (stored
// values differ from the history) and at the echoes of that seam through the
// loop, always on grid nodes; both one-sided nodal values are kept so every
// read can stay on the correct branch.
struct Line {
    std::vector<double> right;  // value at t_k (right limit)
    std::vector<double> left;   // value at t_k^-
    const std::function<double(double)>* history = nullptr;
    double dt = 0.0;

    double hist(double t) const { return (history && *history) ? (*history)(t) : 0.0; }

    double right_at(long k) const {
        return (k >= 0) ? right[static_cast<std::size_t>(k)] : hist(k * dt);
    }
    double left_at(long k) const {
        return (k >= 0) ? left[static_cast<std::size_t>(k)] : hist(k * dt);
    }
    // value inside a step interval; interpolates between the branch-correct
    // endpoint values and never crosses the t = 0 seam
    double inside(double pos) const {
        if (pos < 0.0) return hist(pos * dt);
        const double fl = std::floor(pos);
        const long k = static_cast<long>(fl);
        const double frac = pos - fl;
        if (frac == 0.0) return right_at(k);
        return (1.0 - frac) * right_at(k) + frac * left_at(k + 1);
    }
};

struct Derived {
    double dx, dxi;
};

}  // namespace

SimTrace simulate(const SimConfig& config) {
    config.loop.validate();
    config.gains.validate();
    if (!(config.dt > 0.0)) throw InvalidParameter("dt must be > 0");
    if (!(config.t_end > 0.0)) throw InvalidParameter("t_end must be > 0");

    const double a = config.loop.plant.a, b = config.loop.plant.b;
    const double kp = config.gains.kp, ki = config.gains.ki;
    const double yref = config.y_ref;
    const double h1 = config.loop.channel.h1, h2 = config.loop.channel.h2;
    const double h = h1 + h2;
    const bool scat = config.loop.scattering.mode != ScatteringMode::None;
    const double d = config.loop.scattering.effective_d(kp);
    if (scat && h <= 0.0)
        throw InvalidParameter("scattering transformation requires a delay channel (h > 0)");
    if (scat && !(d > 0.0))
        throw InvalidParameter("scattering impedance d = zeta * kp must be positive");
    if (config.t_end < 10.0 * h)
        throw InvalidParameter("t_end must cover at least ten round trips");

    const long n1 = exact_steps(h1, config.dt, "the forward delay h1");
    const long n2 = exact_steps(h2, config.dt, "the return delay h2");
    const long steps = std::max<long>(1, std::lround(config.t_end / config.dt));
    const double dt = config.dt;

    SimTrace tr;
    tr.y_ref = yref;
    tr.dt = dt;
    tr.h1 = h1;
    tr.h2 = h2;
    tr.mode = config.loop.scattering.mode;
    const auto reserve = [&](std::vector<double>& v) { v.reserve(steps + 1); };
    reserve(tr.t);
    reserve(tr.x);
    reserve(tr.xi);
    reserve(tr.u1);
    reserve(tr.y1);
    reserve(tr.y0);
    reserve(tr.u0);
    if (scat) {
        reserve(tr.s_plus_0);
        reserve(tr.s_minus_1);
        reserve(tr.mu);
        reserve(tr.upsilon);
    }

    // in scattering mode the forward line carries s+ injected at l = 0 and
    // the return line s- injected at l = 1; in mode None they carry y0 and
    // y1 directly
    Line fwd, ret;
    fwd.history = &config.forward_history;
    ret.history = &config.return_history;
    fwd.dt = ret.dt = dt;
    fwd.right.reserve(steps + 1);
    fwd.left.reserve(steps + 1);
    ret.right.reserve(steps + 1);
    ret.left.reserve(steps + 1);

    // nodal loop algebra; the left variant reads left limits of the delayed
    // signals so the seam echoes keep exact one-sided values
    struct NodeSignals {
        double u0, u1, y0, fwd_out, ret_out;
        double sp0 = 0, sm1 = 0, mu1 = 0, ups0 = 0;
    };
    const auto node = [&](long i, double xv, double xiv, bool left_variant) -> NodeSignals {
        const auto fwd_at = [&](long k) {
            return left_variant ? fwd.left_at(k) : fwd.right_at(k);
        };
        const auto ret_at = [&](long k) {
            return left_variant ? ret.left_at(k) : ret.right_at(k);
        };
        NodeSignals s{};
        if (scat) {
            double sp1 = (n1 > 0) ? fwd_at(i - n1) : 0.0;
            const double sm0 = (n2 > 0) ? ret_at(i - n2) : (-2.0 * d * xv + sp1);
            s.y0 = (-kp * sm0 - kp * d * yref + ki * d * xiv) / (d + kp);
            const double mu0 = -s.y0;
            s.ups0 = (mu0 - sm0) / d;
            s.sp0 = 2.0 * mu0 - sm0;
            s.u0 = s.ups0 - yref;
            if (n1 == 0) sp1 = s.sp0;
            s.mu1 = -d * xv + sp1;
            s.sm1 = -2.0 * d * xv + sp1;
            s.u1 = s.mu1;
            s.fwd_out = s.sp0;
            s.ret_out = s.sm1;
            // wave pairs must invert back to the port variables they came from
            assert(std::abs(s.sp0 - (mu0 + d * s.ups0)) <=
                   1e-12 * (1.0 + std::abs(s.sp0) + std::abs(sm0)));
            assert(std::abs(sm0 - (mu0 - d * s.ups0)) <=
                   1e-12 * (1.0 + std::abs(s.sp0) + std::abs(sm0)));
            assert(std::abs(s.sm1 - (s.mu1 - d * xv)) <=
                   1e-12 * (1.0 + std::abs(sp1) + std::abs(s.sm1)));
        } else {
            s.u0 = ((n2 > 0) ? ret_at(i - n2) : xv) - yref;
            s.y0 = kp * s.u0 + ki * xiv;
            s.u1 = -((n1 > 0) ? fwd_at(i - n1) : s.y0);
            s.fwd_out = s.y0;
            s.ret_out = xv;
        }
        return s;
    };

    // stage reads stay on the correct branch: start of step uses the right
    // limit, interior positions interpolate within one step interval, end of
    // step uses the left limit at the next node
    const auto read = [](const Line& line, long base, double theta) {
        if (theta == 1.0) return line.left_at(base + 1);
        if (theta == 0.0) return line.right_at(base);
        return line.inside(static_cast<double>(base) + theta);
    };
    const auto stage = [&](long i, double theta, double xs, double xis) -> Derived {
        double u0s, u1s;
        if (scat) {
            double sm0;
            double sp1 = 0.0;
            const bool have_sp1 = n1 > 0;
            if (have_sp1) sp1 = read(fwd, i - n1, theta);
            if (n2 > 0) {
                sm0 = read(ret, i - n2, theta);
            } else {
                sm0 = -2.0 * d * xs + sp1;  // plant-side map feeds straight back
            }
            const double y0s = (-kp * sm0 - kp * d * yref + ki * d * xis) / (d + kp);
            u0s = (-y0s - sm0) / d - yref;
            if (!have_sp1) sp1 = -2.0 * y0s - sm0;
            u1s = -d * xs + sp1;
        } else {
            u0s = ((n2 > 0) ? read(ret, i - n2, theta) : xs) - yref;
            const double y0s = kp * u0s + ki * xis;
            u1s = -((n1 > 0) ? read(fwd, i - n1, theta) : y0s);
        }
        return {-a * xs + b * u1s, u0s};
    };

    double x = config.x0, xi = config.xi0;
    for (long i = 0; i <= steps; ++i) {
        if (std::abs(x) > 1e12 || std::abs(xi) > 1e12) throw NumericalBlowup(i, i * dt);

        const NodeSignals right = node(i, x, xi, false);
        fwd.right.push_back(right.fwd_out);
        ret.right.push_back(right.ret_out);
        if (i == 0) {
            // left limits at the seam are the history values themselves
            fwd.left.push_back(fwd.hist(0.0));
            ret.left.push_back(ret.hist(0.0));
        } else {
            const NodeSignals ls = node(i, x, xi, true);
            fwd.left.push_back(ls.fwd_out);
            ret.left.push_back(ls.ret_out);
        }

        tr.t.push_back(i * dt);
        tr.x.push_back(x);
        tr.xi.push_back(xi);
        tr.y1.push_back(x);
        tr.y0.push_back(right.y0);
        tr.u0.push_back(right.u0);
        tr.u1.push_back(right.u1);
        if (scat) {
            tr.s_plus_0.push_back(right.sp0);
            tr.s_minus_1.push_back(right.sm1);
            tr.mu.push_back(right.mu1);
            tr.upsilon.push_back(right.ups0);
        }

        if (i == steps) break;

        const Derived k1 = stage(i, 0.0, x, xi);
        const Derived k2 = stage(i, 0.5, x + 0.5 * dt * k1.dx, xi + 0.5 * dt * k1.dxi);
        const Derived k3 = stage(i, 0.5, x + 0.5 * dt * k2.dx, xi + 0.5 * dt * k2.dxi);
        const Derived k4 = stage(i, 1.0, x + dt * k3.dx, xi + dt * k3.dxi);
        x += dt / 6.0 * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
        xi += dt / 6.0 * (k1.dxi + 2.0 * k2.dxi + 2.0 * k3.dxi + k4.dxi);
    }

    try {
        const double start = std::max(5.0 * h, 0.25 * config.t_end);
        const auto est = estimate_decay(tr, start, config.t_end);
        tr.sigma_hat = est.sigma_hat;
        tr.fit_quality = est.r_squared;
    } catch (const Error&) {
        tr.sigma_hat = std::numeric_limits<double>::quiet_NaN();
        tr.fit_quality = 0.0;
    }
    return tr;
}

// ---------------------------------------------------------------------------
// decay estimation
// ---------------------------------------------------------------------------

DecayEstimate estimate_decay(const SimTrace& trace, double t_start, double t_end) {
    if (trace.t.size() < 2) throw InvalidParameter("trace is too short");
    const double h = trace.h1 + trace.h2;
    if (t_start + 1e-12 < 5.0 * h)
        throw InvalidParameter("fit window must start after the delay transient (>= 5h)");
    if (t_start < trace.t.front() - 1e-12 || t_end > trace.t.back() + 1e-12 ||
        !(t_end > t_start))
        throw InvalidParameter("fit window must lie inside the trace");

    std::size_t lo = 0, hi = trace.t.size() - 1;
    while (lo < trace.t.size() && trace.t[lo] < t_start - 1e-12) ++lo;
    while (hi > 0 && trace.t[hi] > t_end + 1e-12) --hi;
    if (hi <= lo + 4) throw InvalidParameter("fit window holds too few samples");

    std::vector<double> e(hi - lo + 1);
    double emax = 0.0;
    for (std::size_t k = 0; k < e.size(); ++k) {
        e[k] = std::abs(trace.y1[lo + k] - trace.y_ref);
        emax = std::max(emax, e[k]);
    }
    if (emax <= 0.0) throw InsufficientPeaks(0);
    const double floor = std::max(emax * 1e-13, 1e-280);

    // envelope peaks with parabolic refinement
    std::vector<std::pair<double, double>> pts;  // (t, ln e)
    for (std::size_t k = 1; k + 1 < e.size(); ++k) {
        if (!(e[k] >= e[k - 1] && e[k] > e[k + 1])) continue;
        if (e[k] <= floor) continue;
        const double den = e[k - 1] - 2.0 * e[k] + e[k + 1];
        double tpk = trace.t[lo + k], epk = e[k];
        if (den < 0.0) {
            const double shift = 0.5 * (e[k - 1] - e[k + 1]) / den;
            if (std::abs(shift) <= 1.0) {
                tpk += shift * trace.dt;
                epk = e[k] - 0.25 * (e[k - 1] - e[k + 1]) * shift;
            }
        }
        if (epk > floor) pts.emplace_back(tpk, std::log(epk));
    }

    if (pts.size() < 3) {
        // fall back to a direct fit when the envelope is monotone; the
        // envelope is resampled on a fixed quadrature grid so the estimate
        // does not wobble with the simulation step
        int violations = 0;
        for (std::size_t k = 1; k < e.size(); ++k)
            if (e[k] > e[k - 1] * (1.0 + 1e-6) + 1e-12 * emax) ++violations;
        if (violations > 0) throw InsufficientPeaks(static_cast<int>(pts.size()));
        pts.clear();
        const double ta = trace.t[lo], tb = trace.t[hi];
        const int quad = 1024;
        for (int j = 0; j < quad; ++j) {
            const double tq = ta + (tb - ta) * (j + 0.5) / quad;
            const double pos = (tq - ta) / trace.dt;
            const auto k = static_cast<std::size_t>(pos);
            const double frac = pos - static_cast<double>(k);
            if (k + 1 >= e.size()) break;
            const double eq = (1.0 - frac) * e[k] + frac * e[k + 1];
            if (eq > floor) pts.emplace_back(tq, std::log(eq));
        }
        if (pts.size() < 5) throw InsufficientPeaks(0);
    }

    // least squares on ln e = c + beta t
    double st = 0, sy = 0, stt = 0, sty = 0;
    const double n = static_cast<double>(pts.size());
    for (const auto& [tt, yy] : pts) {
        st += tt;
        sy += yy;
        stt += tt * tt;
        sty += tt * yy;
    }
    const double denom = n * stt - st * st;
    if (denom <= 0.0) throw InsufficientPeaks(static_cast<int>(pts.size()));
    const double beta = (n * sty - st * sy) / denom;
    const double alpha = (sy - beta * st) / n;

    double ss_res = 0, ss_tot = 0;
    const double ymean = sy / n;
    for (const auto& [tt, yy] : pts) {
        ss_res += (yy - alpha - beta * tt) * (yy - alpha - beta * tt);
        ss_tot += (yy - ymean) * (yy - ymean);
    }
    DecayEstimate out;
    out.sigma_hat = std::abs(beta);
    out.r_squared = (ss_tot > 0.0) ? std::max(0.0, 1.0 - ss_res / ss_tot)
                                   : (ss_res <= 1e-30 ? 1.0 : 0.0);
    return out;
}

}  // namespace delaypi
