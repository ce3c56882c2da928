#pragma once

#include "delaypi/quasipoly.hpp"
#include "delaypi/types.hpp"

#include <vector>

namespace delaypi {

/// Gain pair plus the evidence that it assigns the requested decay.
struct TuningResult {
    Gains gains;
    double sigma = 0.0;       ///< assigned decay abscissa
    double sigma_star = 0.0;  ///< scenario's maximal / least-upper-bound decay
    bool feasible = false;
    double p_residual = 0.0;       ///< |p(-sigma)|
    double dp_residual = 0.0;      ///< |p'(-sigma)|
    double ddp_residual = 0.0;     ///< |p''(-sigma)|, ~0 only at the collapse
    double system_residual = 0.0;  ///< double-root linear system residual
    double diff_op_margin = 0.0;   ///< NaN when the loop is retarded
};

struct SigmaStarBranches {
    double accepted = 0.0;  ///< the branch with nonnegative gains
    double rejected = 0.0;  ///< the other solution, for diagnostics
};

/// Maximal achievable decay of the plain delayed loop,
/// (4 + a h - sqrt(8 + a^2 h^2)) / (2 h).
double sigma_star_no_scatter(double a, double h);
SigmaStarBranches sigma_star_no_scatter_branches(double a, double h);

/// Minimal gains assigning a double real root at -sigma to the plain loop.
/// Valid for a/2 <= sigma <= sigma_star (h = 0 allowed, upper bound then
/// void); throws OutOfRange otherwise.
Gains minimal_gains_no_scatter(double a, double b, double h, double sigma);

/// Collapse function of the constant-impedance loop; its feasible roots are
/// the maximal achievable decays.
double m_d(double sigma, double a, double b, double h, double d);

/// Largest root of m_d that yields nonnegative gains, a stable difference
/// operator and a clean root-count certificate. Throws NoFeasibleRoot when
/// every root fails the filters.
TuningResult sigma_star_fixed_d(double a, double b, double h, double d);

/// Minimal gains assigning a double root at -sigma to the constant-impedance
/// loop, a/2 < sigma <= sigma_star_fixed_d.
TuningResult minimal_gains_fixed_d(double a, double b, double h, double d, double sigma);

/// Delay-free constants of the proportional-impedance design:
/// eta_sup solves 2(1+e^eta) + eta(1-e^eta) = 0, zeta_min is the impedance
/// ratio whose decay bound reaches sigma_sup.
struct UniversalConstants {
    double eta_sup = 0.0;
    double zeta_min = 0.0;
};
UniversalConstants universal_constants();

/// Decay limit common to all plants: eta_sup / h.
double sigma_sup(double h);

/// Collapse function of the proportional-impedance loop, in the
/// dimensionless variable eta = h sigma.
double m_zeta(double eta, double zeta);
double m_zeta_derivative(double eta, double zeta);

/// All positive roots of m_zeta(., zeta), ascending. Tangency (zeta at
/// zeta_min) is resolved through the minimum of m_zeta.
std::vector<double> m_zeta_positive_roots(double zeta);

/// Least upper bound on the decay for d = zeta kp: the difference-operator
/// bound ln((1+zeta)/(1-zeta))/h below zeta_min, otherwise the first
/// positive root of m_zeta(h sigma) — the abscissa where the minimal gains
/// blow up.
double sigma_star_zeta(double zeta, double h);

/// Minimal gains assigning a double root at -sigma on the plane d = zeta kp,
/// a/2 < sigma < sigma_star_zeta. kp is the smallest positive root of the
/// collapse quadratic; throws NoPositiveRoot when none exists.
TuningResult minimal_gains_zeta(double a, double b, double h, double zeta, double sigma);

/// The recommended recipe: impedance ratio zeta_min, minimal gains for the
/// requested sigma, plus a root-count certificate taken just inside the
/// assigned abscissa.
struct DesignResult {
    ScatteringConfig scattering;
    TuningResult tuning;
    int certificate_count = -1;  ///< roots right of -(sigma - eps); 0 certifies
};
DesignResult design_procedure(double a, double b, double h, double sigma);

}  // namespace delaypi
