#include "delaypi/quasipoly.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace delaypi {

namespace {

constexpr double kBoundaryRootRel = 1e-9;   // min |q| < rel * (1 + max |q|) => contour hit
constexpr int kMaxRefineDepth = 64;

void trim_trailing_zeros(std::vector<double>& c) {
    while (c.size() > 1 && c.back() == 0.0) c.pop_back();
    if (c.size() == 1 && c[0] == 0.0) c.clear();
}

bool all_zero(const std::vector<double>& c) {
    return std::all_of(c.begin(), c.end(), [](double v) { return v == 0.0; });
}

}  // namespace

Quasipolynomial::Quasipolynomial(std::vector<Term> terms) {
    for (auto& t : terms) {
        if (!(t.delay >= 0.0) || !std::isfinite(t.delay))
            throw InvalidParameter("term delay must be a finite nonnegative number");
        for (double c : t.coeffs)
            if (!std::isfinite(c)) throw InvalidParameter("non-finite coefficient");
        trim_trailing_zeros(t.coeffs);
    }
    std::erase_if(terms, [](const Term& t) { return t.coeffs.empty() || all_zero(t.coeffs); });
    if (terms.empty())
        throw InvalidParameter("quasipolynomial is identically zero");
    std::sort(terms.begin(), terms.end(),
              [](const Term& a, const Term& b) { return a.delay < b.delay; });
    for (std::size_t i = 1; i < terms.size(); ++i)
        if (!(terms[i].delay > terms[i - 1].delay))
            throw InvalidParameter("term delays must be strictly increasing");

    terms_ = std::move(terms);
    degree_ = 0;
    for (const auto& t : terms_) degree_ = std::max(degree_, t.degree());

    // retarded: the delay-0 term strictly dominates; neutral: a delayed term
    // matches it
    if (terms_.front().delay == 0.0 && terms_.size() > 1) {
        const int d0 = terms_.front().degree();
        int dmax_delayed = -1;
        for (std::size_t i = 1; i < terms_.size(); ++i)
            dmax_delayed = std::max(dmax_delayed, terms_[i].degree());
        neutral_ = (dmax_delayed == d0);
    }
}

Quasipolynomial Quasipolynomial::polynomial(std::vector<double> coeffs) {
    return Quasipolynomial({Term{0.0, std::move(coeffs)}});
}

Complex Quasipolynomial::operator()(Complex s) const {
    Complex total = 0.0;
    for (const auto& t : terms_) {
        Complex p = 0.0;
        for (auto it = t.coeffs.rbegin(); it != t.coeffs.rend(); ++it) p = p * s + *it;
        total += (t.delay == 0.0) ? p : p * std::exp(-t.delay * s);
    }
    return total;
}

Complex eval(const Quasipolynomial& q, Complex s) { return q(s); }

Quasipolynomial derivative(const Quasipolynomial& q) {
    std::vector<Quasipolynomial::Term> out;
    out.reserve(q.terms().size());
    for (const auto& t : q.terms()) {
        const auto& c = t.coeffs;
        std::vector<double> d(std::max<std::size_t>(c.size(), 1), 0.0);
        for (std::size_t i = 1; i < c.size(); ++i) d[i - 1] = static_cast<double>(i) * c[i];
        if (t.delay != 0.0)
            for (std::size_t i = 0; i < c.size(); ++i) d[i] -= t.delay * c[i];
        out.push_back({t.delay, std::move(d)});
    }
    return Quasipolynomial(std::move(out));
}

Quasipolynomial assemble_characteristic(const PlantParams& plant, double h,
                                        const ScatteringConfig& scattering, double kp,
                                        double ki) {
    const double a = plant.a, b = plant.b;
    using Term = Quasipolynomial::Term;

    if (scattering.mode == ScatteringMode::None) {
        // s^2 + a s + (kp s + ki) b e^{-h s}
        if (h == 0.0)
            return Quasipolynomial({Term{0.0, {b * ki, a + b * kp, 1.0}}});
        return Quasipolynomial({Term{0.0, {0.0, a, 1.0}}, Term{h, {b * ki, b * kp}}});
    }

    if (h == 0.0)
        throw InvalidParameter("scattering transformation requires a delay channel (h > 0)");

    const double d = scattering.effective_d(kp);
    // p2(s) s^2 + p1(s) s + p0(s) with
    //   p2 = (1+e^{-hs}) d           + (1-e^{-hs}) kp
    //   p1 = (1+e^{-hs})(b kp + a) d + (1-e^{-hs})(b d^2 + a kp + ki)
    //   p0 = (1+e^{-hs}) b ki d      + (1-e^{-hs}) a ki
    // expanded into the delay-0 and delay-h polynomial parts.
    const double p2c = d, p2e = d;  // constant and e^{-hs} parts of p2's d piece
    const double q2c = kp, q2e = -kp;
    const double p1c = (b * kp + a) * d, p1e = (b * kp + a) * d;
    const double q1c = b * d * d + a * kp + ki, q1e = -(b * d * d + a * kp + ki);
    const double p0c = b * ki * d, p0e = b * ki * d;
    const double q0c = a * ki, q0e = -a * ki;

    std::vector<double> c0 = {p0c + q0c, p1c + q1c, p2c + q2c};
    std::vector<double> ch = {p0e + q0e, p1e + q1e, p2e + q2e};
    std::vector<Term> terms;
    terms.push_back({0.0, std::move(c0)});
    terms.push_back({h, std::move(ch)});
    return Quasipolynomial(std::move(terms));
}

Quasipolynomial build_characteristic(const PlantParams& plant, const ChannelParams& channel,
                                     const ScatteringConfig& scattering, const Gains& gains) {
    plant.validate();
    channel.validate();
    scattering.validate();
    gains.validate();
    return assemble_characteristic(plant, channel.round_trip(), scattering, gains.kp, gains.ki);
}

DifferenceOperatorCheck difference_operator_ok(double d, double kp, double h, double sigma) {
    if (!(d > 0.0)) throw InvalidParameter("difference operator check needs d > 0");
    if (!(h > 0.0)) throw InvalidParameter("difference operator check needs h > 0");
    if (!(kp >= 0.0)) throw InvalidParameter("difference operator check needs kp >= 0");
    const double ratio = std::exp(h * sigma) * std::abs(d - kp) / (d + kp);
    DifferenceOperatorCheck r;
    r.margin = 1.0 - ratio;
    r.ok = (sigma <= 0.0) || ratio < 1.0;  // always holds on and left of the imaginary axis
    return r;
}

// ---------------------------------------------------------------------------
// argument-principle counting
// ---------------------------------------------------------------------------

namespace {

struct ContourWalk {
    const Quasipolynomial& q;
    long budget;
    long evals = 0;
    double min_abs = std::numeric_limits<double>::infinity();
    double max_abs = 0.0;

    Complex sample(Complex z) {
        if (++evals > budget)
            throw NonConvergence("contour refinement exceeded its sample budget", evals);
        Complex f = q(z);
        const double m = std::abs(f);
        min_abs = std::min(min_abs, m);
        max_abs = std::max(max_abs, m);
        if (m < 1e-280) throw BoundaryRootError(m, 1e-280);
        return f;
    }

    // a phase step is trusted only when it is small and the modulus does not
    // jump; a full hidden turn would have to dip toward zero in between and
    // trip one of the two conditions at the midpoint probe
    static bool trusted(double step, Complex fa, Complex fb) {
        if (std::abs(step) >= std::numbers::pi / 2.0) return false;
        const double ra = std::abs(fa), rb = std::abs(fb);
        return ra <= 2.0 * rb && rb <= 2.0 * ra;
    }

    // phase increment over the directed segment [z0, z1]; every accepted
    // increment is verified through its midpoint
    double sweep(Complex z0, Complex z1, Complex f0, Complex f1, int depth) {
        const Complex zm = 0.5 * (z0 + z1);
        const Complex fm = sample(zm);
        const double s1 = std::arg(fm / f0);
        const double s2 = std::arg(f1 / fm);
        if (trusted(s1, f0, fm) && trusted(s2, fm, f1)) return s1 + s2;
        if (depth >= kMaxRefineDepth) {
            if (min_abs < kBoundaryRootRel * (1.0 + max_abs))
                throw BoundaryRootError(min_abs, kBoundaryRootRel * (1.0 + max_abs));
            throw NonConvergence("contour phase did not settle under bisection", evals);
        }
        return sweep(z0, zm, f0, fm, depth + 1) + sweep(zm, z1, fm, f1, depth + 1);
    }
};

// initial samples so that no segment can hide a full phase turn: the
// exponentials wind at rate max_delay along the imaginary direction and the
// polynomial part contributes at most degree * pi along a straight line
int initial_segments(const Quasipolynomial& q, Complex z0, Complex z1) {
    const double phase_budget =
        q.max_delay() * std::abs(z1.imag() - z0.imag()) + q.degree() * std::numbers::pi;
    return std::clamp(static_cast<int>(std::ceil(phase_budget)) + 4, 8, 1 << 16);
}

}  // namespace

int count_roots_in_rect(const Quasipolynomial& q, double re_lo, double re_hi, double im_lo,
                        double im_hi, long max_samples) {
    if (!(re_hi > re_lo) || !(im_hi > im_lo))
        throw InvalidParameter("count rectangle is empty");

    ContourWalk walk{q, max_samples};
    const Complex corners[5] = {{re_lo, im_lo}, {re_hi, im_lo}, {re_hi, im_hi},
                                {re_lo, im_hi}, {re_lo, im_lo}};
    double total = 0.0;
    for (int e = 0; e < 4; ++e) {
        const Complex za = corners[e], zb = corners[e + 1];
        const int n = initial_segments(q, za, zb);
        Complex zprev = za;
        Complex fprev = walk.sample(za);
        for (int i = 1; i <= n; ++i) {
            const double t = static_cast<double>(i) / n;
            const Complex z = za + t * (zb - za);
            const Complex f = walk.sample(z);
            total += walk.sweep(zprev, z, fprev, f, 0);
            zprev = z;
            fprev = f;
        }
    }

    const double winding = total / (2.0 * std::numbers::pi);
    const long long n = std::llround(winding);
    if (std::abs(winding - static_cast<double>(n)) > 0.25 || n < 0) {
        // a clean integer is accepted even when the contour grazed a small
        // modulus; only an unresolved winding blames the near-boundary root
        if (walk.min_abs < kBoundaryRootRel * (1.0 + walk.max_abs))
            throw BoundaryRootError(walk.min_abs, kBoundaryRootRel * (1.0 + walk.max_abs));
        throw NonConvergence("winding number did not settle to an integer", walk.evals);
    }
    return static_cast<int>(n);
}

int count_roots_right_of(const Quasipolynomial& q, const RootWindow& window, long max_samples) {
    window.validate();
    return count_roots_in_rect(q, -window.sigma, window.re_max, -window.omega_max,
                               window.omega_max, max_samples);
}

int count_roots_right_of_retry(const Quasipolynomial& q, RootWindow window, int max_retries) {
    const double jitter = 1e-6;
    for (int attempt = 0;; ++attempt) {
        try {
            return count_roots_right_of(q, window);
        } catch (const BoundaryRootError&) {
            if (attempt >= max_retries) throw;
            // alternate sides so a root sitting exactly on the edge ends up
            // strictly inside or outside on some retry
            const int k = attempt + 1;
            window.sigma += (k % 2 == 1 ? +1.0 : -1.0) * jitter * ((k + 1) / 2);
        }
    }
}

// ---------------------------------------------------------------------------
// rightmost root
// ---------------------------------------------------------------------------

namespace {

struct Rect {
    double x0, x1, y0, y1;
    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double diag() const { return std::hypot(width(), height()); }
};

// count that treats a grazed root (or blown budget) as "unknown"
std::optional<int> try_count(const Quasipolynomial& q, const Rect& r) {
    try {
        return count_roots_in_rect(q, r.x0, r.x1, r.y0, r.y1);
    } catch (const Error&) {
        return std::nullopt;
    }
}

std::optional<Complex> newton_polish(const Quasipolynomial& q, const Quasipolynomial& dq,
                                     Complex seed, double tol_abs) {
    // damped iteration, driven to the numerical floor: multiple roots
    // converge only linearly and land a fat cluster if stopped at the
    // acceptance tolerance
    Complex s = seed;
    double best = std::abs(q(s));
    Complex best_s = s;
    for (int it = 0; it < 200; ++it) {
        const Complex f = q(s);
        const Complex g = dq(s);
        if (std::abs(g) == 0.0) break;
        Complex step = f / g;
        double cur = std::abs(f);
        bool moved = false;
        for (int halve = 0; halve < 30; ++halve) {
            const Complex trial = s - step;
            const double m = std::abs(q(trial));
            if (m < cur) {
                s = trial;
                moved = true;
                if (m < best) { best = m; best_s = s; }
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }
    return (best < tol_abs) ? std::optional<Complex>(best_s) : std::nullopt;
}

}  // namespace

std::optional<Complex> rightmost_root(const Quasipolynomial& q, const RootWindow& window) {
    window.validate();
    const Rect full{-window.sigma, window.re_max, -window.omega_max, window.omega_max};
    if (count_roots_in_rect(q, full.x0, full.x1, full.y0, full.y1) == 0) return std::nullopt;

    // shrink a vertical strip [xl, xr] known to contain the rightmost root.
    // Splits landing inside the small-modulus zone of a root make the count
    // refuse; alternate fractions dodge it, and when the whole interval is
    // saturated by one zone the strip is already a localized root cluster.
    const double fractions[] = {0.5, 0.38, 0.62, 0.27, 0.73, 0.45, 0.55};
    double xl = full.x0, xr = full.x1;
    const double tol_x = 1e-3 * std::max(1.0, std::abs(window.sigma));
    while (xr - xl > tol_x) {
        bool progressed = false;
        for (double f : fractions) {
            const double xm = xl + f * (xr - xl);
            const auto c = try_count(q, {xm, full.x1, full.y0, full.y1});
            if (!c) continue;
            (*c > 0 ? xl : xr) = xm;
            progressed = true;
            break;
        }
        if (!progressed) break;
    }

    const double tol_abs = 1e-10 * (1.0 + std::abs(q(Complex(0.0, 0.0))));
    const Quasipolynomial dq = derivative(q);
    const double slack = 1e-6 * (1.0 + std::abs(window.sigma));
    const auto in_window = [&](Complex z) {
        return z.real() >= full.x0 - slack && z.real() <= full.x1 + slack &&
               std::abs(z.imag()) <= full.y1 + slack;
    };
    const auto accept = [&](Complex z) {
        // anything polished inside the strip shares the rightmost real part
        // up to the strip width
        return in_window(z) && z.real() >= xl - tol_x;
    };

    // isolate a seed box inside the strip. A box whose count cannot be
    // trusted is split rather than dropped, so a grazed root is never lost;
    // the upper half plane is preferred so conjugate pairs report their
    // omega >= 0 member.
    const double seed_diag = 0.35 * std::max(1.0, std::abs(window.sigma));
    std::vector<Rect> stack{{xl - tol_x, xr + tol_x, full.y0, full.y1}};
    while (!stack.empty()) {
        Rect r = stack.back();
        stack.pop_back();
        const auto c = try_count(q, r);
        if (c && *c == 0) continue;
        if (r.diag() < seed_diag) {
            const Complex seed(0.5 * (r.x0 + r.x1), 0.5 * (r.y0 + r.y1));
            if (auto root = newton_polish(q, dq, seed, tol_abs))
                if (accept(*root)) return root;
            if (r.diag() < 1e-7 * std::max(1.0, std::abs(window.sigma))) continue;
        }
        if (r.height() > r.width()) {
            const double ym = 0.5 * (r.y0 + r.y1);
            Rect lower{r.x0, r.x1, r.y0, ym}, upper{r.x0, r.x1, ym, r.y1};
            if (ym <= 0.0) {
                stack.push_back(lower);
                stack.push_back(upper);
            } else {
                stack.push_back(upper);
                stack.push_back(lower);
            }
        } else {
            const double xm = 0.5 * (r.x0 + r.x1);
            stack.push_back({r.x0, xm, r.y0, r.y1});
            stack.push_back({xm, r.x1, r.y0, r.y1});  // right half explored first
        }
    }
    throw NonConvergence("failed to polish a root inside the isolated strip");
}

// ---------------------------------------------------------------------------
// window suggestion
// ---------------------------------------------------------------------------

SuggestedWindow default_root_window(const Quasipolynomial& q, double sigma) {
    // Cauchy-style bounds. Over Re s > -sigma (weights e^{delay * sigma}),
    // with m the principal-coefficient reserve, every root satisfies
    // |s| <= 1 + rest / m; over Re s >= 0 (weights 1) the same estimate gives
    // a typically much smaller radius that bounds every real part.
    const int n = q.degree();
    double m = 0.0, rest = 0.0;        // weights for Re s > -sigma
    double m_rhp = 0.0, rest_rhp = 0.0;  // weights for Re s >= 0
    for (const auto& t : q.terms()) {
        const double w = std::exp(t.delay * sigma);
        for (int i = 0; i <= t.degree(); ++i) {
            const double c = std::abs(t.coeffs[static_cast<std::size_t>(i)]);
            if (i == n) {
                m += (t.delay == 0.0) ? w * c : -w * c;
                m_rhp += (t.delay == 0.0) ? c : -c;
            } else {
                rest += w * c;
                rest_rhp += c;
            }
        }
    }

    const double chain_omega =
        (q.max_delay() > 0.0) ? 40.0 * std::numbers::pi / q.max_delay() : 0.0;
    const double radius =
        (m > 0.0) ? (1.0 + rest / m) * 1.0001 + 0.1
                  : 50.0 * (1.0 + std::abs(sigma)) + 4.0 * chain_omega;
    const double radius_rhp =
        (m_rhp > 0.0) ? (1.0 + rest_rhp / m_rhp) * 1.0001 + 0.1 : radius;

    SuggestedWindow out;
    out.window.sigma = sigma;
    out.window.re_max = std::max(std::min(radius, radius_rhp), 1.0 + std::abs(sigma));
    if (chain_omega > 0.0) {
        // neutral chains make the full Cauchy disk unaffordable; a positive
        // difference-operator margin keeps far chain roots left of -sigma,
        // so the cap stays sound for certificates
        out.window.omega_max = std::clamp(radius, chain_omega, 8.0 * chain_omega);
        out.certified = (m > 0.0) && radius <= 8.0 * chain_omega;
    } else {
        out.window.omega_max = radius;
        out.certified = m > 0.0;
    }
    return out;
}

}  // namespace delaypi
