#include "delaypi/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace delaypi {

namespace {

constexpr double kArgTol = 1e-12;  // absolute bisection tolerance on abscissas

double bisect(const std::function<double(double)>& f, double lo, double hi, double flo) {
    for (int it = 0; it < 200 && hi - lo > kArgTol; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm > 0.0) == (flo > 0.0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

// double-root linear system of the constant-impedance loop at s = -sigma;
// rows are the vanishing of p and p' as linear conditions on (kp, ki)
struct DoubleRootSystem {
    double A11, A12, A21, A22, B1, B2;
};

DoubleRootSystem double_root_system(double a, double b, double h, double d, double sigma) {
    const double E = std::exp(h * sigma);
    const double as = a - sigma;
    const double a2s = a - 2.0 * sigma;
    const double bd = b * d;
    DoubleRootSystem s;
    s.A11 = -(1.0 + E) * sigma * bd - (1.0 - E) * sigma * as;
    s.A12 = (1.0 + E) * bd + (1.0 - E) * as;
    s.A21 = bd + a2s + E * ((bd - as) * (h * sigma + 1.0) + sigma);
    s.A22 = 1.0 - E * (h * (bd - as) + 1.0);
    s.B1 = (1.0 - E) * sigma * bd + (1.0 + E) * sigma * as;
    s.B2 = -(bd + a2s) + E * ((bd - as) * (h * sigma + 1.0) + sigma);
    return s;
}


Gains fixed_d_gain_formula(double a, double b, double h, double d, double sigma) {
    const double E = std::exp(h * sigma);
    const double as = a - sigma;
    const double bd = b * d;
    const double den = bd + as + E * (bd - as);
    const double kp = d *
                      ((bd - as) * (bd - as) * E * E +
                       2.0 * sigma * E * (2.0 * bd + h * (bd * bd - as * as)) -
                       (bd + as) * (bd + as)) /
                      (den * den);
    const double ki =
        2.0 * d * sigma * sigma * E * (2.0 * bd + h * (bd * bd - as * as)) / (den * den);
    return {kp, ki};
}

struct Residuals {
    double p, dp, ddp;
};

Residuals characteristic_residuals(const PlantParams& plant, double h,
                                   const ScatteringConfig& sc, double kp, double ki,
                                   double sigma) {
    const auto q = assemble_characteristic(plant, h, sc, kp, ki);
    const auto dq = derivative(q);
    const auto ddq = derivative(dq);
    const Complex s(-sigma, 0.0);
    return {std::abs(q(s)), std::abs(dq(s)), std::abs(ddq(s))};
}

int certificate_count(const PlantParams& plant, double h, const ScatteringConfig& sc,
                      const Gains& g, double sigma) {
    const double eps = 1e-4 * std::max(1.0, sigma);
    const auto q = assemble_characteristic(plant, h, sc, g.kp, g.ki);
    const auto sw = default_root_window(q, sigma - eps);
    return count_roots_right_of_retry(q, sw.window);
}

void require(bool cond, const char* what) {
    if (!cond) throw InvalidParameter(what);
}

}  // namespace

// ---------------------------------------------------------------------------
// plain delayed loop
// ---------------------------------------------------------------------------

SigmaStarBranches sigma_star_no_scatter_branches(double a, double h) {
    require(a >= 0.0, "plant parameter a must be >= 0");
    require(h > 0.0, "collapse abscissa needs h > 0");
    const double root = std::sqrt(8.0 + a * a * h * h);
    return {(4.0 + a * h - root) / (2.0 * h), (4.0 + a * h + root) / (2.0 * h)};
}

double sigma_star_no_scatter(double a, double h) {
    return sigma_star_no_scatter_branches(a, h).accepted;
}

Gains minimal_gains_no_scatter(double a, double b, double h, double sigma) {
    require(a >= 0.0 && b > 0.0, "invalid plant");
    require(h >= 0.0, "invalid delay");
    const double tol = 1e-9 * std::max(1.0, std::abs(sigma));
    if (sigma < a / 2.0 - tol)
        throw OutOfRange("assigned decay must satisfy sigma >= a/2");
    if (h > 0.0 && sigma > sigma_star_no_scatter(a, h) + tol)
        throw OutOfRange("assigned decay exceeds the maximal achievable decay");
    const double E = std::exp(h * sigma);
    const double as = a - sigma;
    const double a2s = a - 2.0 * sigma;
    return {std::max(0.0, (sigma * h * as - a2s) / (b * E)),
            std::max(0.0, sigma * sigma * (h * as + 1.0) / (b * E))};
}

// ---------------------------------------------------------------------------
// constant impedance
// ---------------------------------------------------------------------------

double m_d(double sigma, double a, double b, double h, double d) {
    const double E = std::exp(h * sigma);
    const double as = a - sigma;
    const double a2s = a - 2.0 * sigma;
    const double bd = b * d;
    const double plus = 2.0 * h * bd * bd * bd + (h * h * sigma * as + 4.0) * bd * bd +
                        2.0 * h * (sigma * sigma - a2s * a2s) * bd - h * h * sigma * as * as * as;
    const double minus = h * h * sigma * bd * bd * bd + 2.0 * h * (a + sigma) * bd * bd +
                         (4.0 * a - h * h * sigma * as * as) * bd - 2.0 * h * as * as * as;
    return (1.0 + E) * plus + (1.0 - E) * minus;
}

TuningResult sigma_star_fixed_d(double a, double b, double h, double d) {
    require(a >= 0.0 && b > 0.0, "invalid plant");
    require(h > 0.0 && d > 0.0, "constant-impedance bound needs h > 0, d > 0");

    const double hi = sigma_sup(h) * (1.0 - 1e-9);
    const double lo = std::max(a / 2.0, hi * 1e-6);
    if (!(hi > lo)) throw NoFeasibleRoot("empty collapse bracket");

    const auto f = [&](double s) { return m_d(s, a, b, h, d); };

    // geometric scan for sign changes, roots polished by bisection
    std::vector<double> roots;
    const int n = 2000;
    double prev_s = lo, prev_f = f(lo);
    for (int i = 1; i <= n; ++i) {
        const double s = lo * std::pow(hi / lo, static_cast<double>(i) / n);
        const double fs = f(s);
        if (fs == 0.0)
            roots.push_back(s);
        else if ((fs > 0.0) != (prev_f > 0.0))
            roots.push_back(bisect(f, prev_s, s, prev_f));
        prev_s = s;
        prev_f = fs;
    }

    const ScatteringConfig sc = ScatteringConfig::fixed_d(d);
    for (auto it = roots.rbegin(); it != roots.rend(); ++it) {
        const double sigma = *it;
        if (sigma <= a / 2.0) continue;
        Gains g = fixed_d_gain_formula(a, b, h, d, sigma);
        if (g.kp < -1e-12 || g.ki < -1e-12) continue;
        g.kp = std::max(0.0, g.kp);
        g.ki = std::max(0.0, g.ki);
        const auto dop = difference_operator_ok(d, g.kp, h, sigma);
        if (!dop.ok) continue;
        try {
            if (certificate_count(PlantParams{a, b}, h, sc, g, sigma) != 0) continue;
        } catch (const Error&) {
            continue;
        }
        TuningResult r;
        r.gains = g;
        r.sigma = sigma;
        r.sigma_star = sigma;
        r.feasible = true;
        const auto res = characteristic_residuals({a, b}, h, sc, g.kp, g.ki, sigma);
        r.p_residual = res.p;
        r.dp_residual = res.dp;
        r.ddp_residual = res.ddp;
        const auto sys = double_root_system(a, b, h, d, sigma);
        r.system_residual = std::abs(sys.A11 * g.kp + sys.A12 * g.ki - d * sys.B1) +
                            std::abs(sys.A21 * g.kp + sys.A22 * g.ki - d * sys.B2);
        r.diff_op_margin = dop.margin;
        return r;
    }
    throw NoFeasibleRoot("no collapse root passed the gain, difference-operator "
                         "and root-count filters");
}

TuningResult minimal_gains_fixed_d(double a, double b, double h, double d, double sigma) {
    require(a >= 0.0 && b > 0.0, "invalid plant");
    require(h > 0.0 && d > 0.0, "constant-impedance gains need h > 0, d > 0");
    const double tol = 1e-9 * std::max(1.0, sigma);
    if (!(sigma > a / 2.0 - tol))
        throw OutOfRange("assigned decay must satisfy sigma > a/2");

    const TuningResult collapse = sigma_star_fixed_d(a, b, h, d);
    if (sigma > collapse.sigma_star + tol)
        throw OutOfRange("assigned decay exceeds the constant-impedance bound");

    const Gains g = fixed_d_gain_formula(a, b, h, d, sigma);
    const auto dop = difference_operator_ok(d, std::max(0.0, g.kp), h, sigma);
    if (!dop.ok) throw InfeasibleDifferenceOperator(dop.margin);

    TuningResult r;
    r.gains = {std::max(0.0, g.kp), std::max(0.0, g.ki)};
    r.sigma = sigma;
    r.sigma_star = collapse.sigma_star;
    r.feasible = g.kp >= -1e-12 && g.ki >= -1e-12;
    const auto sc = ScatteringConfig::fixed_d(d);
    const auto res = characteristic_residuals({a, b}, h, sc, r.gains.kp, r.gains.ki, sigma);
    r.p_residual = res.p;
    r.dp_residual = res.dp;
    r.ddp_residual = res.ddp;
    const auto sys = double_root_system(a, b, h, d, sigma);
    r.system_residual = std::abs(sys.A11 * r.gains.kp + sys.A12 * r.gains.ki - d * sys.B1) +
                        std::abs(sys.A21 * r.gains.kp + sys.A22 * r.gains.ki - d * sys.B2);
    r.diff_op_margin = dop.margin;
    return r;
}

// ---------------------------------------------------------------------------
// proportional impedance
// ---------------------------------------------------------------------------

UniversalConstants universal_constants() {
    const auto f = [](double eta) {
        return 2.0 * (1.0 + std::exp(eta)) + eta * (1.0 - std::exp(eta));
    };
    const double eta = bisect(f, 1.0, 5.0, f(1.0));
    const double x = std::exp(eta);
    const double zeta = (1.0 + x) * (1.0 + x) / (2.0 * eta * x - (1.0 + x) * (1.0 - x));
    return {eta, zeta};
}

double sigma_sup(double h) {
    require(h > 0.0, "decay limit needs h > 0");
    return universal_constants().eta_sup / h;
}

double m_zeta(double eta, double zeta) {
    const double x = std::exp(eta);
    return (1.0 + x) * (zeta * (1.0 - x) + 1.0 + x) - 2.0 * zeta * eta * x;
}

double m_zeta_derivative(double eta, double zeta) {
    const double x = std::exp(eta);
    return 2.0 * x * ((1.0 + x) - zeta * (x + eta + 1.0));
}

std::vector<double> m_zeta_positive_roots(double zeta) {
    require(zeta > 0.0, "collapse roots need zeta > 0");
    const double eta_hi = 60.0;
    const int n = 24000;
    const auto f = [&](double eta) { return m_zeta(eta, zeta); };

    std::vector<double> roots;
    double prev_e = eta_hi / n, prev_f = f(prev_e);
    double min_e = prev_e, min_f = prev_f;
    for (int i = 2; i <= n; ++i) {
        const double e = eta_hi * i / n;
        const double fe = f(e);
        if (fe == 0.0)
            roots.push_back(e);
        else if ((fe > 0.0) != (prev_f > 0.0))
            roots.push_back(bisect(f, prev_e, e, prev_f));
        if (fe < min_f) {
            min_f = fe;
            min_e = e;
        }
        prev_e = e;
        prev_f = fe;
    }

    if (roots.empty() && min_f > 0.0) {
        // near-tangent case: accept the minimum as a double root when the
        // dip reaches (numerical) zero
        double lo = std::max(eta_hi / n, min_e - 0.1), hi = std::min(eta_hi, min_e + 0.1);
        for (int it = 0; it < 200 && hi - lo > kArgTol; ++it) {
            const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
            if (f(m1) < f(m2))
                hi = m2;
            else
                lo = m1;
        }
        const double eta = 0.5 * (lo + hi);
        const double scale = 1.0 + std::abs(m_zeta(0.0, zeta));
        if (std::abs(f(eta)) <= 1e-7 * scale) roots.push_back(eta);
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

double sigma_star_zeta(double zeta, double h) {
    require(zeta > 0.0, "decay bound needs zeta > 0");
    require(h > 0.0, "decay bound needs h > 0");
    const auto uc = universal_constants();
    if (zeta < uc.zeta_min * (1.0 - 1e-12))
        return std::log((1.0 + zeta) / (1.0 - zeta)) / h;
    const auto roots = m_zeta_positive_roots(zeta);
    if (roots.empty()) {
        if (std::abs(zeta - uc.zeta_min) <= 1e-9 * uc.zeta_min) return uc.eta_sup / h;
        throw NoFeasibleRoot("collapse equation has no positive root");
    }
    // the bound is where the minimal gains first blow up: the smallest root
    return roots.front() / h;
}

TuningResult minimal_gains_zeta(double a, double b, double h, double zeta, double sigma) {
    require(a >= 0.0 && b > 0.0, "invalid plant");
    require(h > 0.0 && zeta > 0.0, "proportional-impedance gains need h > 0, zeta > 0");
    const double tol = 1e-9 * std::max(1.0, sigma);
    if (!(sigma > a / 2.0 - tol))
        throw OutOfRange("assigned decay must satisfy sigma > a/2");
    const double bound = sigma_star_zeta(zeta, h);
    if (!(sigma < bound))
        throw OutOfRange("assigned decay is not below the proportional-impedance bound");

    // collapse quadratic in d = zeta kp, derived from the double-root system
    // by the determinant identity |A| + zeta |[A2 B]| = 0
    const auto F = [&](double d) {
        const auto s = double_root_system(a, b, h, d, sigma);
        return (s.A11 * s.A22 - s.A12 * s.A21) + zeta * (s.A12 * s.B2 - s.A22 * s.B1);
    };
    const double f0 = F(0.0), fp = F(1.0), fm = F(-1.0);
    const double c2 = 0.5 * (fp + fm) - f0, c1 = 0.5 * (fp - fm), c0 = f0;

    std::vector<double> ds;
    const double scale = std::max({std::abs(c2), std::abs(c1), std::abs(c0)});
    if (scale == 0.0) throw NoPositiveRoot("collapse quadratic vanished identically");
    if (std::abs(c2) < 1e-12 * scale) {
        if (std::abs(c1) < 1e-14 * scale)
            throw NoPositiveRoot("collapse quadratic degenerated to a constant");
        ds.push_back(-c0 / c1);
    } else {
        const double disc = c1 * c1 - 4.0 * c2 * c0;
        if (disc < 0.0) throw NoPositiveRoot("collapse quadratic has no real root");
        const double sq = std::sqrt(disc);
        const double u = (c1 >= 0.0) ? (-c1 - sq) / 2.0 : (-c1 + sq) / 2.0;
        if (u != 0.0) {
            ds.push_back(u / c2);
            ds.push_back(c0 / u);
        } else {
            ds.push_back(0.0);
            ds.push_back(-c1 / c2);
        }
    }

    // smallest positive kp that yields admissible gains and an actually
    // sigma-stable loop; the other quadratic root can park the double root
    // behind a worse one or drive ki negative
    const double E = std::exp(h * sigma);
    const double as = a - sigma;
    const auto ki_of = [&](double kp) {
        return ((1.0 + E) * zeta * (b * kp + as) + (1.0 - E) * (zeta * zeta * b * kp + as)) /
               ((1.0 + E) * zeta * b * kp + (1.0 - E) * as) * sigma * kp;
    };
    const auto sc = ScatteringConfig::proportional(zeta);
    std::sort(ds.begin(), ds.end());
    double kp = std::numeric_limits<double>::quiet_NaN();
    double ki = std::numeric_limits<double>::quiet_NaN();
    for (double d : ds) {
        const double cand = d / zeta;
        if (!(cand > 0.0)) continue;
        const double cand_ki = ki_of(cand);
        if (!(cand_ki >= -1e-12 * std::max(1.0, cand))) continue;
        if (!difference_operator_ok(zeta * cand, cand, h, sigma).ok) continue;
        try {
            if (certificate_count({a, b}, h, sc, {cand, std::max(0.0, cand_ki)}, sigma) != 0)
                continue;
        } catch (const Error&) {
            continue;
        }
        kp = cand;
        ki = cand_ki;
        break;
    }
    if (!std::isfinite(kp))
        throw NoPositiveRoot("no root of the collapse quadratic yields admissible, "
                             "sigma-stable gains");

    TuningResult r;
    r.gains = {kp, std::max(0.0, ki)};
    r.sigma = sigma;
    r.sigma_star = bound;
    const auto res = characteristic_residuals({a, b}, h, sc, kp, r.gains.ki, sigma);
    r.p_residual = res.p;
    r.dp_residual = res.dp;
    r.ddp_residual = res.ddp;
    const double d = zeta * kp;
    const auto sys = double_root_system(a, b, h, d, sigma);
    r.system_residual = std::abs(sys.A11 * kp + sys.A12 * r.gains.ki - d * sys.B1) +
                        std::abs(sys.A21 * kp + sys.A22 * r.gains.ki - d * sys.B2);
    const auto dop = difference_operator_ok(d, kp, h, sigma);
    r.diff_op_margin = dop.margin;
    r.feasible = ki >= -1e-12 && dop.ok;
    return r;
}

DesignResult design_procedure(double a, double b, double h, double sigma) {
    require(a >= 0.0 && b > 0.0, "invalid plant");
    require(h > 0.0, "design procedure needs h > 0");
    const auto uc = universal_constants();
    if (!(sigma > a / 2.0))
        throw OutOfRange("step (ii): choose sigma > a/2");
    if (!(sigma < uc.eta_sup / h))
        throw OutOfRange("step (ii): choose sigma below the delay-only limit");

    DesignResult out;
    out.scattering = ScatteringConfig::proportional(uc.zeta_min);
    out.tuning = minimal_gains_zeta(a, b, h, uc.zeta_min, sigma);
    out.certificate_count =
        certificate_count(PlantParams{a, b}, h, out.scattering, out.tuning.gains, sigma);
    return out;
}

}  // namespace delaypi
