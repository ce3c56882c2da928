#pragma once

#include <stdexcept>
#include <string>

namespace delaypi {

/// Base class for every error thrown by this library.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A type invariant or operation precondition was violated.
struct InvalidParameter : Error {
    using Error::Error;
};

/// The contour of a root count passes too close to a zero; the caller
/// should perturb the window abscissa and retry.
struct BoundaryRootError : Error {
    double min_modulus;
    double threshold;
    BoundaryRootError(double min_mod, double thresh)
        : Error("root too close to counting contour (min |q| = " +
                std::to_string(min_mod) + ", threshold = " + std::to_string(thresh) + ")"),
          min_modulus(min_mod), threshold(thresh) {}
};

/// Adaptive refinement exceeded its sample budget.
struct NonConvergence : Error {
    long samples_used;
    explicit NonConvergence(const std::string& what, long samples = -1)
        : Error(what), samples_used(samples) {}
};

/// The real-root boundary line is undefined at this abscissa.
struct DegenerateDenominator : Error {
    double sigma;
    explicit DegenerateDenominator(double sig)
        : Error("real-root boundary denominator vanishes at sigma = " + std::to_string(sig)),
          sigma(sig) {}
};

/// The 2x2 boundary system is singular at this frequency.
struct SingularSystem : Error {
    double det;
    explicit SingularSystem(double determinant)
        : Error("boundary system is singular (det = " + std::to_string(determinant) + ")"),
          det(determinant) {}
};

/// The boundary quadratic has no real solution at this frequency.
struct NoRealRoot : Error {
    double discriminant;
    explicit NoRealRoot(double disc)
        : Error("boundary quadratic has negative discriminant (" + std::to_string(disc) + ")"),
          discriminant(disc) {}
};

/// Requested decay rate lies outside the feasible bracket.
struct OutOfRange : Error {
    using Error::Error;
};

/// The delayed-difference part of a neutral loop is unstable at the
/// requested abscissa.
struct InfeasibleDifferenceOperator : Error {
    double margin;
    explicit InfeasibleDifferenceOperator(double m)
        : Error("difference operator unstable (margin = " + std::to_string(m) + ")"),
          margin(m) {}
};

/// No root of the collapse equation survives the feasibility filters.
struct NoFeasibleRoot : Error {
    using Error::Error;
};

/// The gain quadratic has no positive solution.
struct NoPositiveRoot : Error {
    using Error::Error;
};

/// A simulated state left the representable range.
struct NumericalBlowup : Error {
    long step;
    double time;
    NumericalBlowup(long step_index, double t)
        : Error("simulation state exceeded 1e12 at step " + std::to_string(step_index) +
                " (t = " + std::to_string(t) + ")"),
          step(step_index), time(t) {}
};

/// Too few envelope peaks and no monotone decay to regress on.
struct InsufficientPeaks : Error {
    int peaks;
    explicit InsufficientPeaks(int n)
        : Error("decay fit needs at least 3 envelope peaks or a monotone envelope (got " +
                std::to_string(n) + " peaks)"),
          peaks(n) {}
};

}  // namespace delaypi
