#pragma once

// Quasi-static (RMS / phasor) model of a line-commutated thyristor rectifier.
//
// Two variants: the basic one treats commutation as a lumped DC resistance
// R_dc = 3 w L_c / pi, the extended one resolves the overlap angle mu and the
// resulting AC current magnitude factor k_ic. Both are memoryless.

#include "thyrsim/dae/model.hpp"
#include "thyrsim/errors.hpp"
#include "thyrsim/frames.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

namespace thyrsim::rms {

inline constexpr double kVoltageCoeff = 3.0 * kSqrt3 / kPi;   ///< 3 sqrt(3) / pi
inline constexpr double kCurrentCoeff = 2.0 * kSqrt3 / kPi;   ///< 2 sqrt(3) / pi

struct RmsParams {
    double commutation_inductance = 0.0;  ///< L_c [H]
    double grid_omega = 2.0 * kPi * 50.0; ///< w_g [rad/s]
    int pulses = 6;                       ///< 6 or 12 (series bridges)

    [[nodiscard]] int bridges() const { return pulses / 6; }
    [[nodiscard]] double r_dc() const { return 3.0 * grid_omega * commutation_inductance / kPi; }

    void validate() const {
        if (!(commutation_inductance > 0.0)) throw InvalidParameter("rms: L_c must be > 0");
        if (!(grid_omega > 0.0)) throw InvalidParameter("rms: grid omega must be > 0");
        if (pulses != 6 && pulses != 12) throw InvalidParameter("rms: pulses must be 6 or 12");
    }
};

struct RmsBasicSolution {
    double v_dc = 0.0;
    double i_m = 0.0;
    double phi = 0.0;
};

struct RmsSolution {
    double v_dc = 0.0;  ///< [V]
    double i_m = 0.0;   ///< AC current peak magnitude [A]
    double phi = 0.0;   ///< displacement angle, current lagging voltage [rad]
    double mu = 0.0;    ///< commutation angle [rad]
    double k_ic = 1.0;  ///< AC current magnitude factor [-]
};

/// Classical model: V_dc = k_v V_m cos(alpha) - R_dc I_dc, I_m = (2 sqrt3/pi) I_dc, phi = alpha.
/// Values are per series bridge scaled by the bridge count.
inline RmsBasicSolution rms_basic(double v_m, double alpha, double i_dc, const RmsParams& p) {
    const double n = p.bridges();
    return {n * (kVoltageCoeff * v_m * std::cos(alpha) - p.r_dc() * i_dc), n * kCurrentCoeff * i_dc, alpha};
}

/// Overlap-current factor k_ic in a cancellation-free form; tends to 1 as mu -> 0.
inline double current_factor(double alpha, double mu) {
    if (mu <= 0.0) return 1.0;
    const double sm = std::sin(mu);
    const double x = 2.0 * std::sin(2.0 * alpha + mu) * sm;          // cos 2a - cos 2(a+mu)
    const double y = 2.0 * mu - 2.0 * std::cos(2.0 * alpha + mu) * sm; // 2mu + sin 2a - sin 2(a+mu)
    const double den = 8.0 * std::sin(alpha + 0.5 * mu) * std::sin(0.5 * mu); // 4(cos a - cos(a+mu))
    return std::hypot(x, y) / den;
}

/// Argument of the arccos in the overlap equation.
inline double overlap_argument(double v_m, double alpha, double i_dc, const RmsParams& p) {
    return std::cos(alpha) - 2.0 * p.grid_omega * p.commutation_inductance / (kSqrt3 * v_m) * i_dc;
}

/// Extended model with explicit overlap angle. Throws OutOfRange when the
/// overlap equation has no solution at this operating point.
inline RmsSolution rms_extended(double v_m, double alpha, double i_dc, const RmsParams& p) {
    if (!(v_m > 0.0)) throw OutOfRange("rms_extended: V_m must be > 0");
    const double arg = overlap_argument(v_m, alpha, i_dc, p);
    if (!(arg >= -1.0 && arg <= 1.0))
        throw OutOfRange("rms_extended: commutation infeasible, arccos argument " + std::to_string(arg));
    RmsSolution s;
    s.mu = std::max(0.0, std::acos(arg) - alpha);
    s.k_ic = current_factor(alpha, s.mu);
    const double n = p.bridges();
    const double shape = std::cos(alpha + 0.5 * s.mu) * std::cos(0.5 * s.mu);
    s.v_dc = n * kVoltageCoeff * v_m * shape;
    s.i_m = n * kCurrentCoeff * s.k_ic * i_dc;
    s.phi = std::acos(std::clamp(shape / s.k_ic, -1.0, 1.0));
    return s;
}

/// Source-side view of a solution.
struct PhasorInterface {
    double dc_source = 0.0;              ///< DC-side voltage source value [V]
    std::complex<double> ac_current{};   ///< AC current-sink phasor in the voltage frame [A]
};

/// AC current phasor of magnitude I_m lagging the voltage phasor (angle `voltage_angle`) by phi.
inline PhasorInterface rms_phasor_interface(double v_dc, double i_m, double phi, double voltage_angle = 0.0) {
    return {v_dc, std::polar(i_m, voltage_angle - phi)};
}

inline PhasorInterface rms_phasor_interface(const RmsSolution& s, double voltage_angle = 0.0) {
    return rms_phasor_interface(s.v_dc, s.i_m, s.phi, voltage_angle);
}

/// Firing angle at which the extended model delivers `v_dc` at `i_dc`.
/// Closed form: V_dc = n k_v V_m (cos a + cos(a+mu))/2 = n (k_v V_m cos a - R_dc I_dc).
inline double firing_angle_for(double v_m, double v_dc, double i_dc, const RmsParams& p) {
    const double n = p.bridges();
    const double c = (v_dc / n + p.r_dc() * i_dc) / (kVoltageCoeff * v_m);
    if (!(c >= -1.0 && c <= 1.0))
        throw OutOfRange("firing_angle_for: requested DC voltage outside the controllable range");
    return std::acos(c);
}

enum class RmsVariant { Basic, Extended };

/// DAE fragment with no states. Algebraics {v_dc, i_d, i_q, mu}; ports
/// {v_d, v_q} (synchronous-frame source EMF), i_dc and alpha_ref. The firing
/// angle acts directly and the current phasor follows the source voltage
/// angle, since the quasi-static model has no PLL.
inline dae::Fragment assemble_rms(const std::string& name, const RmsParams& p, RmsVariant variant = RmsVariant::Extended,
                                  double voltage_base = 1.0, double current_base = 1.0) {
    p.validate();
    dae::Fragment fr;
    fr.name = name;
    fr.algebraics = {{"v_dc", "V", 0.0, voltage_base},
                     {"i_d", "A", 0.0, current_base},
                     {"i_q", "A", 0.0, current_base},
                     {"mu", "rad", 0.0, 1.0}};
    fr.ports = {{"v_d", "V"}, {"v_q", "V"}, {"i_dc", "A"}, {"alpha_ref", "rad"}};
    fr.residual = [p, variant, current_base](const dae::LocalView& v, std::span<double>, std::span<double> g) {
        const std::complex<double> vg{v.port[0], v.port[1]};
        const double v_m = std::abs(vg);
        const double alpha = v.port[3];
        const double i_dc = v.port[2];
        if (i_dc < -1e-6 * current_base) throw CommutationFailure("rms: negative DC current");
        PhasorInterface pi;
        double mu = 0.0;
        if (variant == RmsVariant::Basic) {
            const RmsBasicSolution s = rms_basic(v_m, alpha, i_dc, p);
            pi = rms_phasor_interface(s.v_dc, s.i_m, s.phi, std::arg(vg));
        } else {
            const RmsSolution s = rms_extended(v_m, alpha, i_dc, p);
            pi = rms_phasor_interface(s, std::arg(vg));
            mu = s.mu;
        }
        g[0] = v.z[0] - pi.dc_source;
        g[1] = v.z[1] - pi.ac_current.real();
        g[2] = v.z[2] - pi.ac_current.imag();
        g[3] = v.z[3] - mu;
    };
    return fr;
}

} // namespace thyrsim::rms

