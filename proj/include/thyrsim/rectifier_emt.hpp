#pragma once

// Averaged dq-domain (EMT) model of a line-commutated thyristor rectifier.
//
// The bridge is averaged over one pi/3 segment. On the DC side it is a
// voltage source behind a mu-dependent inductance, on the AC side a current
// sink. Firing instants are referenced to a synchronous-frame PLL, and the
// firing angle command passes through a first-order lag that stands in for
// the sampling delay of the firing logic.

#include "thyrsim/dae/model.hpp"
#include "thyrsim/errors.hpp"
#include "thyrsim/frames.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace thyrsim::emt {

inline constexpr double kVoltageCoeff = 3.0 * kSqrt3 / kPi;
inline constexpr double kCurrentCoeff = 2.0 * kSqrt3 / kPi;
inline constexpr double kMaxOverlap = kPi / 3.0;

enum class CurrentMode { Exact, Linear };

struct EmtParams {
    double commutation_inductance = 0.0; ///< L_c [H]
    int pulses = 6;
    double pll_kp = 1.0;                 ///< [pu frequency / pu voltage]
    double pll_ki = 100.0;               ///< [1/s, pu]
    double omega_n = 2.0 * kPi * 50.0;   ///< [rad/s]
    /// Firing filter cut-off [Hz]; <= 0 selects half the switching frequency (p * f_n / 2).
    double firing_filter_hz = 0.0;
    double voltage_base = 1.0;           ///< PLL normalisation and v_floor reference [V]
    double current_base = 1.0;           ///< residual scaling only [A]
    CurrentMode current_mode = CurrentMode::Exact;

    [[nodiscard]] int bridges() const { return pulses / 6; }
    [[nodiscard]] double omega_z() const {
        const double fc = firing_filter_hz > 0.0 ? firing_filter_hz : 0.5 * pulses * omega_n / (2.0 * kPi);
        return 2.0 * kPi * fc;
    }
    [[nodiscard]] double v_floor() const { return 1e-6 * voltage_base; }

    void validate() const {
        if (!(commutation_inductance > 0.0)) throw InvalidParameter("emt: L_c must be > 0");
        if (pulses != 6 && pulses != 12) throw InvalidParameter("emt: pulses must be 6 or 12");
        if (pll_kp < 0.0 || pll_ki < 0.0) throw InvalidParameter("emt: PLL gains must be >= 0");
        if (!(omega_n > 0.0)) throw InvalidParameter("emt: omega_n must be > 0");
        if (!(voltage_base > 0.0) || !(current_base > 0.0)) throw InvalidParameter("emt: bases must be > 0");
    }
};

struct EmtState {
    double alpha = 0.0;     ///< filtered firing angle [rad]
    double theta_pll = 0.0; ///< PLL angle relative to the synchronous frame [rad]
    double x_pll = 0.0;     ///< PLL integrator [rad/s]
};

struct Overlap {
    double mu = 0.0;
    bool saturated = false;
};

/// Commutation (overlap) angle from the closed-form current balance.
/// The arccos argument is clamped to [-1, 1] and mu to [0, pi/3]; either
/// clamp sets `saturated`.
inline Overlap commutation_angle(double alpha, double theta_e, double v_mag, double omega, double i_dc,
                                 double l_c, double v_floor = 0.0) {
    if (!(v_mag > v_floor) || !(v_mag > 0.0)) throw DegenerateVoltage("commutation_angle: voltage magnitude at floor");
    const double a = alpha + theta_e;
    const double raw = std::cos(a) - 2.0 * omega * l_c / (kSqrt3 * v_mag) * std::abs(i_dc);
    Overlap o;
    const double arg = std::clamp(raw, -1.0, 1.0);
    o.saturated = arg != raw;
    double mu = std::acos(arg) - a;
    if (mu < 0.0) {
        mu = 0.0;
        o.saturated = o.saturated || std::abs(i_dc) > 0.0;
    } else if (mu > kMaxOverlap) {
        mu = kMaxOverlap;
        o.saturated = true;
    } else if (mu == kMaxOverlap) {
        o.saturated = true;
    }
    o.mu = mu;
    return o;
}

/// L~(mu) = (2 - 3 mu / (2 pi)) L_c, between 1.5 L_c (mu = pi/3) and 2 L_c (mu = 0).
inline double effective_inductance(double mu, double l_c) { return (2.0 - 1.5 * mu / kPi) * l_c; }

/// Averaged DC voltage without the inductive term.
inline double open_circuit_voltage(double v_mag, double theta_e, double alpha, double mu) {
    return kVoltageCoeff * v_mag * std::cos(0.5 * mu) * std::cos(alpha + 0.5 * mu + theta_e);
}

inline double dc_voltage(double v_mag, double theta_e, double alpha, double mu, double didt, double l_c) {
    return open_circuit_voltage(v_mag, theta_e, alpha, mu) - effective_inductance(mu, l_c) * didt;
}

/// Incoming-phase current during commutation, theta measured in the PLL frame.
inline double commutation_current(double theta, double alpha, double theta_e, double v_mag, double omega, double l_c) {
    return kSqrt3 * v_mag / (2.0 * omega * l_c) * (std::cos(alpha + theta_e) - std::cos(theta + theta_e + kPi / 3.0));
}

/// Segment-averaged AC current (PLL frame) with the exact commutation current.
inline DqPhasor input_currents_exact(double i_dc, double alpha, double mu, double theta_e, double v_mag, double omega,
                                     double l_c) {
    const double k = 3.0 * v_mag / (kPi * omega * l_c);
    const double sh = std::sin(0.5 * mu);
    const double ca = std::cos(alpha + theta_e);
    const double sm = std::sin(mu);
    const double com_d = 2.0 * std::sin(alpha + 0.5 * mu) * sh * ca + 0.5 * mu * std::sin(theta_e) -
                         0.5 * sm * std::sin(2.0 * alpha + mu + theta_e);
    const double com_q = 2.0 * std::cos(alpha + 0.5 * mu) * sh * ca - 0.5 * mu * std::cos(theta_e) -
                         0.5 * sm * std::cos(2.0 * alpha + mu + theta_e);
    return {kCurrentCoeff * i_dc * std::cos(alpha + mu) + k * com_d,
            -kCurrentCoeff * i_dc * std::sin(alpha + mu) + k * com_q};
}

/// Segment-averaged AC current assuming a linear current ramp during commutation.
inline DqPhasor input_currents_linear(double i_dc, double alpha, double mu) {
    return {kCurrentCoeff * i_dc * std::cos(alpha + 0.5 * mu), -kCurrentCoeff * i_dc * std::sin(alpha + 0.5 * mu)};
}

struct PllOutputs {
    double dtheta = 0.0;    ///< omega_pll - omega_n [rad/s]
    double dx = 0.0;        ///< [rad/s^2]
    double theta_e = 0.0;   ///< voltage angle in the PLL frame [rad]
    double v_mag = 0.0;
    double omega_pll = 0.0;
    DqPhasor v{};           ///< voltage in the PLL frame
};

/// Synchronous-frame PLL. `v_grid` is expressed in the frame rotating at omega_n.
inline PllOutputs pll_derivatives(double theta_pll, double x_pll, const DqPhasor& v_grid, const EmtParams& p) {
    PllOutputs o;
    o.v = rotate(v_grid, theta_pll);
    o.v_mag = o.v.magnitude();
    if (!(o.v_mag > p.v_floor())) throw DegenerateVoltage("pll: voltage magnitude at floor");
    o.theta_e = o.v.angle();
    const double vq_pu = o.v.q / p.voltage_base;
    o.dtheta = p.omega_n * p.pll_kp * vq_pu + x_pll;
    o.omega_pll = p.omega_n + o.dtheta;
    o.dx = p.omega_n * p.pll_ki * vq_pu;
    return o;
}

inline double firing_filter_derivative(double alpha, double alpha_ref, double omega_z) {
    return omega_z * (alpha_ref - alpha);
}

struct EmtOutputs {
    double e_dc = 0.0;      ///< open-circuit averaged DC voltage, all bridges [V]
    double l_eq = 0.0;      ///< series DC inductance, all bridges [H]
    double mu = 0.0;
    bool saturated = false;
    double theta_e = 0.0;
    double v_mag = 0.0;
    double omega_pll = 0.0;
    DqPhasor i_pll{};       ///< AC current in the PLL frame [A]
    DqPhasor i_grid{};      ///< AC current in the synchronous frame [A]
    EmtState derivative{};

    [[nodiscard]] double v_dc(double didt) const { return e_dc - l_eq * didt; }
};

/// Full model evaluation. For 12 pulses the two series bridges are fed
/// through ideal +-15 degree shifters, so averaged voltages add and the
/// averaged fundamental currents coincide on the primary side.
inline EmtOutputs evaluate(const EmtParams& p, const EmtState& s, const DqPhasor& v_grid, double i_dc, double alpha_ref) {
    // thyristors block reverse current; a negative DC current has no averaged counterpart
    if (i_dc < -1e-6 * p.current_base) throw CommutationFailure("emt: negative DC current");
    const PllOutputs pll = pll_derivatives(s.theta_pll, s.x_pll, v_grid, p);
    const double n = p.bridges();
    const double l_c = p.commutation_inductance;
    EmtOutputs o;
    const Overlap ov = commutation_angle(s.alpha, pll.theta_e, pll.v_mag, pll.omega_pll, i_dc, l_c, p.v_floor());
    o.mu = ov.mu;
    o.saturated = ov.saturated;
    o.theta_e = pll.theta_e;
    o.v_mag = pll.v_mag;
    o.omega_pll = pll.omega_pll;
    o.e_dc = n * open_circuit_voltage(pll.v_mag, pll.theta_e, s.alpha, o.mu);
    o.l_eq = n * effective_inductance(o.mu, l_c);
    const DqPhasor i1 = p.current_mode == CurrentMode::Exact
                            ? input_currents_exact(i_dc, s.alpha, o.mu, pll.theta_e, pll.v_mag, pll.omega_pll, l_c)
                            : input_currents_linear(i_dc, s.alpha, o.mu);
    o.i_pll = n * i1;
    o.i_grid = rotate(o.i_pll, -s.theta_pll);
    o.derivative = {firing_filter_derivative(s.alpha, alpha_ref, p.omega_z()), pll.dtheta, pll.dx};
    return o;
}

/// DAE fragment. States {alpha, theta_pll, x_pll}; algebraics {v_dc, i_d, i_q, mu};
/// ports {v_d, v_q} (synchronous-frame source voltage), i_dc, didt and alpha_ref.
/// The -L~ dI/dt term acts as a series inductance on the DC terminal.
inline dae::Fragment assemble_emt(const std::string& name, const EmtParams& p, const EmtState& init = {}) {
    p.validate();
    dae::Fragment fr;
    fr.name = name;
    fr.states = {{"alpha", "rad", init.alpha, 1.0},
                 {"theta_pll", "rad", init.theta_pll, 1.0},
                 {"x_pll", "rad/s", init.x_pll, 1.0}};
    fr.algebraics = {{"v_dc", "V", 0.0, p.voltage_base},
                     {"i_d", "A", 0.0, p.current_base},
                     {"i_q", "A", 0.0, p.current_base},
                     {"mu", "rad", 0.0, 1.0}};
    fr.ports = {{"v_d", "V"}, {"v_q", "V"}, {"i_dc", "A"}, {"didt", "A/s"}, {"alpha_ref", "rad"}};
    fr.residual = [p](const dae::LocalView& v, std::span<double> f, std::span<double> g) {
        const EmtState s{v.x[0], v.x[1], v.x[2]};
        const EmtOutputs o = evaluate(p, s, {v.port[0], v.port[1]}, v.port[2], v.port[4]);
        f[0] = o.derivative.alpha;
        f[1] = o.derivative.theta_pll;
        f[2] = o.derivative.x_pll;
        g[0] = v.z[0] - o.v_dc(v.port[3]);
        g[1] = v.z[1] - o.i_grid.d;
        g[2] = v.z[2] - o.i_grid.q;
        g[3] = v.z[3] - o.mu;
    };
    return fr;
}

} // namespace thyrsim::emt
