#pragma once

#include "delaypi/quasipoly.hpp"
#include "delaypi/types.hpp"

#include <cstdint>
#include <vector>

namespace delaypi {

enum class CurveKind {
    RealRootLine,             ///< locus of a real root at s = -sigma
    ComplexPair,              ///< locus of a pair at s = -sigma +/- j omega
    DifferenceOperatorLimit,  ///< gain bound from the delayed-difference part
};

struct CurveSample {
    double kp = 0.0;
    double ki = 0.0;
    double omega = 0.0;  ///< 0 on the real-root line
};

/// One decay-abscissa boundary curve in the (kp, ki) plane.
struct BoundaryCurve {
    CurveKind kind = CurveKind::RealRootLine;
    double sigma = 0.0;
    std::vector<CurveSample> samples;  ///< omega strictly increasing for ComplexPair
};

/// The omega-dependent 2x2 system behind the complex-pair boundary of the
/// scattering loops: A(omega) (kp, ki)^T = d B(omega).
struct BoundaryKernel {
    double alpha = 0.0;  ///< 1 + e^{h sigma} cos(h omega)
    double beta = 0.0;   ///< 1 - e^{h sigma} cos(h omega)
    double gamma = 0.0;  ///< e^{h sigma} sin(h omega)
    double A11 = 0.0, A12 = 0.0, A21 = 0.0, A22 = 0.0;
    double B1 = 0.0, B2 = 0.0;
};

/// ki on the real-root boundary for the given kp.
/// Throws DegenerateDenominator when the scattering-mode expression blows up.
double real_root_line(const LoopConfig& config, double sigma, double kp);

/// Gain points placing a root pair at -sigma +/- j omega. One point for the
/// None and FixedD modes; up to two for Proportional (roots of a quadratic,
/// only those with kp > 0 are returned).
std::vector<Gains> complex_boundary(const LoopConfig& config, double sigma, double omega);

/// Kernel entries for an explicit impedance d (any scattering mode except
/// None; for Proportional pass the candidate d = zeta * kp).
BoundaryKernel kernel(const PlantParams& plant, double h, double d, double sigma, double omega);

/// Convenience overload using the config's fixed impedance.
BoundaryKernel kernel(const LoopConfig& config, double sigma, double omega);

struct SigmaMapOptions {
    double kp_min = 0.0;
    double kp_max = 10.0;
    double ki_min = 0.0;
    double ki_max = 10.0;
    int resolution = 32;     ///< cells per axis, >= 16
    bool parallel = true;    ///< classify cells on all hardware threads
};

/// Boundary curves plus a classified lattice over the (kp, ki) rectangle.
///
/// Cell (i, j) covers [kp_min + i w, kp_min + (i+1) w] x [...] with w, v the
/// cell widths; `counts` holds the roots right of -sigma at the cell center
/// (-1 when the count could not be resolved), `feasible` whether the
/// difference operator is stable there. The decay region collects cells with
/// count 0 that are feasible.
struct SigmaMap {
    LoopConfig config;
    double sigma = 0.0;
    double kp_min = 0.0, kp_max = 0.0, ki_min = 0.0, ki_max = 0.0;
    int nx = 0, ny = 0;
    std::vector<BoundaryCurve> curves;
    std::vector<int> counts;          ///< nx * ny, row-major in i (kp axis)
    std::vector<double> margins;      ///< difference-operator margin per cell
    std::vector<std::uint8_t> feasible;

    int index(int i, int j) const { return j * nx + i; }
    double cell_kp(int i) const { return kp_min + (i + 0.5) * (kp_max - kp_min) / nx; }
    double cell_ki(int j) const { return ki_min + (j + 0.5) * (ki_max - ki_min) / ny; }
    bool in_region(int idx) const { return counts[idx] == 0 && feasible[idx]; }

    /// Indices of the verified decay-region cells.
    std::vector<int> region_cells() const;
};

SigmaMap build_sigma_map(const LoopConfig& config, double sigma, const SigmaMapOptions& options);

}  // namespace delaypi
