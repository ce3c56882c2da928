#pragma once

#include "delaypi/types.hpp"

#include <functional>
#include <vector>

namespace delaypi {

/// Time-domain experiment description. The step size must divide both
/// one-way delays exactly so every delayed read lands on the sample grid.
struct SimConfig {
    LoopConfig loop;
    Gains gains;
    double y_ref = 0.0;  ///< setpoint
    double x0 = 0.0;     ///< plant state at t = 0
    double xi0 = 0.0;    ///< controller state at t = 0
    double dt = 1e-3;
    double t_end = 1.0;
    /// Channel input histories on t < 0 (wave entering at the controller
    /// side, wave entering at the plant side; plain signals in mode None).
    /// Empty functions mean zero history.
    std::function<double(double)> forward_history;
    std::function<double(double)> return_history;
};

/// Sampled record of one run. All signal vectors share the time grid; the
/// scattering columns stay empty in mode None.
struct SimTrace {
    std::vector<double> t;
    std::vector<double> x, xi;
    std::vector<double> u1, y1, y0, u0;
    std::vector<double> s_plus_0;   ///< wave leaving the controller-side map
    std::vector<double> s_minus_1;  ///< wave leaving the plant-side map
    std::vector<double> mu;         ///< transformed plant input (mu at l = 1)
    std::vector<double> upsilon;    ///< transformed controller feedback (upsilon at l = 0)
    double sigma_hat = 0.0;   ///< NaN when no fit was possible
    double fit_quality = 0.0; ///< regression R^2
    // run parameters needed by consumers
    double y_ref = 0.0;
    double dt = 0.0;
    double h1 = 0.0, h2 = 0.0;
    ScatteringMode mode = ScatteringMode::None;
};

/// Fixed-step run: classic fourth-order steps on the two ODE states, with
/// delayed signals read from ring buffers at exact grid multiples (linearly
/// interpolated at half steps). Each step closes the algebraic loop through
/// the controller-side map in closed form before the channel buffers are
/// fed. Throws NumericalBlowup past |state| = 1e12.
SimTrace simulate(const SimConfig& config);

struct DecayEstimate {
    double sigma_hat = 0.0;
    double r_squared = 0.0;
};

/// Decay rate of |y1 - y_ref| over [t_start, t_end]: log-linear regression
/// on the interpolated peak envelope when the window holds at least three
/// peaks, directly on the samples when the envelope is monotone. Throws
/// InsufficientPeaks otherwise.
DecayEstimate estimate_decay(const SimTrace& trace, double t_start, double t_end);

}  // namespace delaypi
