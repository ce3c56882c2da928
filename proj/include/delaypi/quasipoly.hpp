#pragma once

#include "delaypi/types.hpp"

#include <complex>
#include <optional>
#include <vector>

namespace delaypi {

using Complex = std::complex<double>;

/// Finite sum of (delay, real polynomial) terms,
///   q(s) = sum_k poly_k(s) * exp(-delay_k * s).
///
/// Delays are nonnegative and strictly increasing; coefficient vectors are
/// stored in ascending degree with exact trailing zeros trimmed. The type is
/// immutable after construction and safe to share across threads.
class Quasipolynomial {
public:
    struct Term {
        double delay = 0.0;
        std::vector<double> coeffs;  ///< ascending degree

        int degree() const { return static_cast<int>(coeffs.size()) - 1; }
    };

    explicit Quasipolynomial(std::vector<Term> terms);

    /// Plain polynomial (single delay-0 term).
    static Quasipolynomial polynomial(std::vector<double> coeffs);

    const std::vector<Term>& terms() const { return terms_; }

    /// Degree of the highest-degree term.
    int degree() const { return degree_; }

    /// Largest delay appearing in the sum.
    double max_delay() const { return terms_.back().delay; }

    /// True when a delayed term matches the degree of the delay-0 term.
    /// Neutral spectra carry root chains with a vertical asymptote and need
    /// the difference operator checked before any abscissa claim.
    bool neutral() const { return neutral_; }

    Complex operator()(Complex s) const;

private:
    std::vector<Term> terms_;
    int degree_ = 0;
    bool neutral_ = false;
};

/// Closed-loop characteristic quasipolynomial of the PI loop.
///
/// Mode None yields the retarded  s^2 + a s + (kp s + ki) b e^{-h s}
/// (delayed term merged into the polynomial part when h = 0 or the gains are
/// zero). The scattering modes yield the neutral form with principal, first
/// and constant coefficients that each carry e^{-h s}; Proportional
/// substitutes d = zeta * kp throughout. Rejects h = 0 combined with a
/// scattering mode: the transformation is defined for a delay channel.
Quasipolynomial build_characteristic(const PlantParams& plant, const ChannelParams& channel,
                                     const ScatteringConfig& scattering, const Gains& gains);

/// Same assembly without sign checks on the gains. Boundary machinery uses
/// this to back-substitute curve samples that dip below zero.
Quasipolynomial assemble_characteristic(const PlantParams& plant, double h,
                                        const ScatteringConfig& scattering, double kp, double ki);

Complex eval(const Quasipolynomial& q, Complex s);

/// Term-wise d/ds: (p_k' - delay_k * p_k) e^{-delay_k s}. Same delay set.
Quasipolynomial derivative(const Quasipolynomial& q);

/// Number of zeros of q (with multiplicity) strictly inside the rectangle
/// [re_lo, re_hi] x [im_lo, im_hi], by the argument principle. The contour
/// is refined adaptively until every phase increment between consecutive
/// samples is below pi/2.
///
/// Throws BoundaryRootError when min |q| on the contour falls below
/// 1e-9 * (1 + max |q|), and NonConvergence past the sample budget.
int count_roots_in_rect(const Quasipolynomial& q, double re_lo, double re_hi, double im_lo,
                        double im_hi, long max_samples = 8'000'000);

/// Zeros of q inside [-window.sigma, window.re_max] x [-omega_max, omega_max].
int count_roots_right_of(const Quasipolynomial& q, const RootWindow& window,
                         long max_samples = 8'000'000);

/// count_roots_right_of with the standard recovery from BoundaryRootError:
/// the window abscissa is perturbed by 1e-6 and the count retried, at most
/// `max_retries` times.
int count_roots_right_of_retry(const Quasipolynomial& q, RootWindow window, int max_retries = 3);

/// Root of largest real part inside the window, or nullopt when the window
/// holds none. Recursive rectangle bisection on the argument-principle count
/// isolates a seed; Newton iteration with eval/derivative polishes it to
/// |q(root)| < 1e-10 * (1 + |q(0)|).
std::optional<Complex> rightmost_root(const Quasipolynomial& q, const RootWindow& window);

struct DifferenceOperatorCheck {
    bool ok = false;
    double margin = 0.0;  ///< 1 - e^{h sigma} |d - kp| / (d + kp)
};

/// Stability of the delayed-difference part of the neutral loop at
/// abscissa sigma: e^{h sigma} |d - kp| / (d + kp) < 1. Always holds for
/// sigma <= 0.
DifferenceOperatorCheck difference_operator_ok(double d, double kp, double h, double sigma);

/// Window that provably contains every root right of -sigma whenever the
/// returned `certified` flag is set: re_max and omega_max come from a Cauchy
/// bound on |s| over the half plane Re s > -sigma. When the principal
/// coefficient can vanish there (difference operator not stable at sigma)
/// the bound does not exist and a generous heuristic window is returned with
/// `certified` false.
struct SuggestedWindow {
    RootWindow window;
    bool certified = false;
};
SuggestedWindow default_root_window(const Quasipolynomial& q, double sigma);

}  // namespace delaypi
