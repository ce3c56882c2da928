#pragma once

#include "delaypi/errors.hpp"

#include <cmath>
#include <string>

namespace delaypi {

/// First-order plant  x' = -a x + b u,  y = x.
struct PlantParams {
    double a = 1.0;  ///< pole location, 1/s, >= 0
    double b = 1.0;  ///< input gain, > 0

    void validate() const {
        if (!(a >= 0.0) || !std::isfinite(a))
            throw InvalidParameter("plant parameter a must be >= 0");
        if (!(b > 0.0) || !std::isfinite(b))
            throw InvalidParameter("plant parameter b must be > 0");
    }
};

/// Two one-way transport delays; only the round trip enters the spectrum.
struct ChannelParams {
    double h1 = 0.05;  ///< forward delay, s
    double h2 = 0.05;  ///< return delay, s

    double round_trip() const { return h1 + h2; }

    void validate() const {
        if (!(h1 >= 0.0) || !std::isfinite(h1))
            throw InvalidParameter("forward delay h1 must be >= 0");
        if (!(h2 >= 0.0) || !std::isfinite(h2))
            throw InvalidParameter("return delay h2 must be >= 0");
    }
};

enum class ScatteringMode {
    None,          ///< signals travel the channel unchanged
    FixedD,        ///< wave-variable maps with a constant impedance d
    Proportional,  ///< wave-variable maps with d = zeta * kp
};

/// Channel end-point transformation choice.
struct ScatteringConfig {
    ScatteringMode mode = ScatteringMode::None;
    double value = 0.0;  ///< d for FixedD, zeta for Proportional, unused for None

    static ScatteringConfig none() { return {ScatteringMode::None, 0.0}; }

    static ScatteringConfig fixed_d(double d) {
        if (!(d > 0.0) || !std::isfinite(d))
            throw InvalidParameter("scattering impedance d must be > 0");
        return {ScatteringMode::FixedD, d};
    }

    static ScatteringConfig proportional(double zeta) {
        if (!(zeta > 0.0) || !std::isfinite(zeta))
            throw InvalidParameter("scattering ratio zeta must be > 0");
        return {ScatteringMode::Proportional, zeta};
    }

    void validate() const {
        if (mode != ScatteringMode::None && !(value > 0.0))
            throw InvalidParameter("scattering parameter must be > 0");
    }

    /// Impedance seen by the channel maps for given proportional gain.
    double effective_d(double kp) const {
        switch (mode) {
            case ScatteringMode::None: return 0.0;
            case ScatteringMode::FixedD: return value;
            case ScatteringMode::Proportional: return value * kp;
        }
        return 0.0;
    }
};

/// PI gain pair.
struct Gains {
    double kp = 0.0;
    double ki = 0.0;

    void validate() const {
        if (!(kp >= 0.0) || !std::isfinite(kp))
            throw InvalidParameter("proportional gain kp must be >= 0");
        if (!(ki >= 0.0) || !std::isfinite(ki))
            throw InvalidParameter("integral gain ki must be >= 0");
    }
};

/// Complete loop description: plant, channel, end-point transformation.
struct LoopConfig {
    PlantParams plant;
    ChannelParams channel;
    ScatteringConfig scattering;

    void validate() const {
        plant.validate();
        channel.validate();
        scattering.validate();
    }
};

/// Finite rectangle [-sigma, re_max] x [-omega_max, omega_max] in which
/// roots are counted; the spectrum itself is infinite.
struct RootWindow {
    double sigma = 0.0;       ///< left edge sits at Re s = -sigma
    double omega_max = 100.0; ///< cap on |Im s|
    double re_max = 10.0;     ///< right edge

    void validate() const {
        if (!(omega_max > 0.0)) throw InvalidParameter("omega_max must be > 0");
        if (!(re_max > -sigma)) throw InvalidParameter("root window is empty (re_max <= -sigma)");
    }
};

inline std::string to_string(ScatteringMode m) {
    switch (m) {
        case ScatteringMode::None: return "none";
        case ScatteringMode::FixedD: return "fixed-d";
        case ScatteringMode::Proportional: return "zeta";
    }
    return "?";
}

}  // namespace delaypi
