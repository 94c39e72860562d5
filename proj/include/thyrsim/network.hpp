#pragma once

// Components surrounding the rectifier in composed studies: stiff source with
// dq perturbation inputs, PEM electrolyzer with PI firing-angle control, DC
// current-source load, quasi-static lines and a simplified grid-forming VSM.
// All AC quantities live in the synchronous frame rotating at omega_n.

#include "thyrsim/dae/model.hpp"
#include "thyrsim/errors.hpp"
#include "thyrsim/frames.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace thyrsim::net {

inline constexpr double kDeg = kPi / 180.0;

// ---------------------------------------------------------------- source

struct SourceParams {
    double v_peak = 0.0;                    ///< peak phase-to-ground EMF [V]
    double frequency = 50.0;                ///< [Hz]
    double commutation_inductance = 0.0;    ///< series inductance to the rectifier terminals [H]

    [[nodiscard]] double omega() const { return 2.0 * kPi * frequency; }
    void validate() const {
        if (v_peak < 0.0) throw InvalidParameter("source: v_peak must be >= 0");
        if (!(frequency > 0.0)) throw InvalidParameter("source: frequency must be > 0");
        if (!(commutation_inductance > 0.0)) throw InvalidParameter("source: l_c must be > 0");
    }
};

/// Phase EMFs at time t with a synchronous-frame perturbation (v_pd, v_pq) superimposed.
inline ThreePhase perturbable_source(const SourceParams& p, double t, DqPhasor v_p = {}) {
    return inverse_park({p.v_peak + v_p.d, v_p.q}, p.omega() * t);
}

/// Infinite bus. Inputs {v_pd, v_pq} are series perturbation voltages;
/// algebraics {v_d, v_q} the resulting EMF.
inline dae::Fragment stiff_source(const std::string& name, const SourceParams& p) {
    p.validate();
    const double vb = std::max(p.v_peak, 1.0);
    dae::Fragment fr;
    fr.name = name;
    fr.algebraics = {{"v_d", "V", p.v_peak, vb}, {"v_q", "V", 0.0, vb}};
    fr.inputs = {{"v_peak", "V", p.v_peak, vb}, {"v_pd", "V", 0.0, vb}, {"v_pq", "V", 0.0, vb}};
    fr.residual = [](const dae::LocalView& v, std::span<double>, std::span<double> g) {
        g[0] = v.z[0] - (v.u[0] + v.u[1]);
        g[1] = v.z[1] - v.u[2];
    };
    return fr;
}

// ---------------------------------------------------------- electrolyzer

struct ElectrolyzerParams {
    double l_d = 0.0;     ///< [H]
    double r0 = 0.0;      ///< series resistance [Ohm]
    double r1 = 0.0;      ///< RC-branch resistance [Ohm]
    double c1 = 0.0;      ///< RC-branch capacitance [F]
    double v_rev = 0.0;   ///< reversible voltage [V]

    void validate() const {
        if (!(l_d > 0.0) || !(r0 > 0.0) || !(r1 > 0.0) || !(c1 > 0.0))
            throw InvalidParameter("electrolyzer: l_d, r0, r1, c1 must be > 0");
        if (v_rev < 0.0) throw InvalidParameter("electrolyzer: v_rev must be >= 0");
    }
    /// Steady-state cell voltage at current i.
    [[nodiscard]] double steady_voltage(double i) const { return v_rev + (r0 + r1) * i; }
};

struct ElectrolyzerState {
    double i_cell = 0.0;
    double v1 = 0.0;
};

/// Derivatives of the equivalent circuit
///   V_cell = L_d dI/dt + R0 I + v1 + V_rev,  C1 dv1/dt = I - v1 / R1.
inline ElectrolyzerState electrolyzer_derivatives(const ElectrolyzerState& s, double v_cell, const ElectrolyzerParams& p) {
    return {(v_cell - p.r0 * s.i_cell - s.v1 - p.v_rev) / p.l_d, (s.i_cell - s.v1 / p.r1) / p.c1};
}

/// States {i_dc, v1}; algebraic didt; input v_rev; port v_dc (terminal voltage).
inline dae::Fragment electrolyzer(const std::string& name, const ElectrolyzerParams& p, double i_nominal,
                                  double v_nominal, const ElectrolyzerState& init = {}) {
    p.validate();
    const double ib = std::max(i_nominal, 1.0);
    const double vb = std::max(v_nominal, 1.0);
    dae::Fragment fr;
    fr.name = name;
    fr.states = {{"i_dc", "A", init.i_cell, ib}, {"v1", "V", init.v1, vb}};
    fr.algebraics = {{"didt", "A/s", 0.0, ib * 100.0}};
    fr.g_base = {vb};
    fr.inputs = {{"v_rev", "V", p.v_rev, vb}};
    fr.ports = {{"v_dc", "V"}};
    fr.residual = [p](const dae::LocalView& v, std::span<double> f, std::span<double> g) {
        const double i = v.x[0];
        const double v1 = v.x[1];
        f[0] = v.z[0];
        f[1] = (i - v1 / p.r1) / p.c1;
        g[0] = p.l_d * v.z[0] - (v.port[0] - p.r0 * i - v1 - v.u[0]);
    };
    return fr;
}

// ------------------------------------------------------- PI controller

struct PiParams {
    double kp = 0.0;               ///< [rad/A]
    double ki = 0.0;               ///< [rad/(A s)]
    double alpha_min = 5.0 * kDeg;
    double alpha_max = 85.0 * kDeg;

    void validate() const {
        if (kp < 0.0 || ki < 0.0) throw InvalidParameter("pi: gains must be >= 0");
        if (!(alpha_min < alpha_max)) throw InvalidParameter("pi: alpha_min must be < alpha_max");
    }
};

struct PiOutput {
    double alpha_ref = 0.0;
    double dx = 0.0;
    bool clamped = false;
};

/// alpha* = clamp(alpha0 + kp e + x_i), e = I_dc - I_ref, so that a current
/// excess raises alpha and lowers the DC voltage. The integrator is frozen
/// while the output is clamped.
inline PiOutput pi_firing_controller(double i_dc, double i_ref, double x_i, double alpha0, const PiParams& p) {
    const double e = i_dc - i_ref;
    const double raw = alpha0 + p.kp * e + x_i;
    PiOutput o;
    o.alpha_ref = std::clamp(raw, p.alpha_min, p.alpha_max);
    o.clamped = o.alpha_ref != raw;
    o.dx = o.clamped ? 0.0 : p.ki * e;
    return o;
}

/// Maps a closed-loop current bandwidth onto PI gains for a plant
/// L dI/dt = E(alpha) - R I: the zero cancels the R/L pole and the loop
/// crosses over at f_bw. `de_dalpha` is |dE/dalpha| at the operating point.
inline PiParams pi_gains_for_bandwidth(double f_bw, double l_total, double r_total, double de_dalpha,
                                       PiParams base = {}) {
    if (!(f_bw > 0.0) || !(l_total > 0.0) || !(de_dalpha > 0.0))
        throw InvalidParameter("pi: bandwidth mapping needs positive f_bw, L and dE/dalpha");
    base.kp = 2.0 * kPi * f_bw * l_total / de_dalpha;
    base.ki = base.kp * r_total / l_total;
    return base;
}

/// State x_i; algebraic alpha_ref; inputs {i_ref, alpha0}; port i_dc.
inline dae::Fragment pi_controller(const std::string& name, const PiParams& p, double i_ref, double alpha0) {
    p.validate();
    dae::Fragment fr;
    fr.name = name;
    fr.states = {{"x_i", "rad", 0.0, 1.0}};
    fr.algebraics = {{"alpha_ref", "rad", alpha0, 1.0}};
    fr.inputs = {{"i_ref", "A", i_ref, std::max(std::abs(i_ref), 1.0)}, {"alpha0", "rad", alpha0, 1.0}};
    fr.ports = {{"i_dc", "A"}};
    fr.residual = [p](const dae::LocalView& v, std::span<double> f, std::span<double> g) {
        const PiOutput o = pi_firing_controller(v.port[0], v.u[0], v.x[0], v.u[1], p);
        f[0] = o.dx;
        g[0] = v.z[0] - o.alpha_ref;
    };
    return fr;
}

// ------------------------------------------------------ small blocks

/// Constant signal: input `value` mirrored into algebraic `out`.
inline dae::Fragment setpoint(const std::string& name, const std::string& unit, double value, double scale = 1.0) {
    dae::Fragment fr;
    fr.name = name;
    fr.algebraics = {{"out", unit, value, scale}};
    fr.inputs = {{"value", unit, value, scale}};
    fr.residual = [](const dae::LocalView& v, std::span<double>, std::span<double> g) { g[0] = v.z[0] - v.u[0]; };
    return fr;
}

/// DC current-source load with prescribed current and slope.
/// Inputs {i_set, didt_set}; algebraics {i_dc, didt}.
inline dae::Fragment current_source_load(const std::string& name, double i_set) {
    const double ib = std::max(std::abs(i_set), 1.0);
    dae::Fragment fr;
    fr.name = name;
    fr.algebraics = {{"i_dc", "A", i_set, ib}, {"didt", "A/s", 0.0, ib * 100.0}};
    fr.inputs = {{"i_set", "A", i_set, ib}, {"didt_set", "A/s", 0.0, ib * 100.0}};
    fr.residual = [](const dae::LocalView& v, std::span<double>, std::span<double> g) {
        g[0] = v.z[0] - v.u[0];
        g[1] = v.z[1] - v.u[1];
    };
    return fr;
}

/// Quasi-static series inductance between two dq nodes:
/// v_from - v_to = j omega L i. Algebraics {i_d, i_q} flow from -> to.
inline dae::Fragment line(const std::string& name, double inductance, double omega, double i_scale, double v_scale) {
    if (!(inductance > 0.0)) throw InvalidParameter("line: inductance must be > 0");
    dae::Fragment fr;
    fr.name = name;
    fr.algebraics = {{"i_d", "A", 0.0, i_scale}, {"i_q", "A", 0.0, i_scale}};
    fr.g_base = {v_scale, v_scale};
    fr.ports = {{"from_d", "V"}, {"from_q", "V"}, {"to_d", "V"}, {"to_q", "V"}};
    const double x = omega * inductance;
    fr.residual = [x](const dae::LocalView& v, std::span<double>, std::span<double> g) {
        g[0] = (v.port[0] - v.port[2]) + x * v.z[1];
        g[1] = (v.port[1] - v.port[3]) - x * v.z[0];
    };
    return fr;
}

// ------------------------------------------------------------------ VSM

struct VsmParams {
    double rating = 1.0;        ///< [W]
    double h = 5.0;             ///< inertia constant [s]
    double d = 0.32;            ///< damping [pu power / pu frequency]
    double t_v = 0.05;          ///< voltage lag time constant [s]
    double k_v = 1.0;           ///< terminal-voltage regulation gain [V/V]
    double l_v = 0.0;           ///< virtual/series inductance behind which the EMF sits [H]

    void validate() const {
        if (!(rating > 0.0) || !(h > 0.0) || !(d > 0.0) || !(t_v > 0.0))
            throw InvalidParameter("vsm: rating, h, d, t_v must be > 0");
        if (k_v < 0.0) throw InvalidParameter("vsm: k_v must be >= 0");
    }
};

/// Grid-forming source with swing dynamics
///   d(delta)/dt = omega_n dw,  2H d(dw)/dt = p_ref - p - D dw,
/// and an EMF magnitude following a first-order lag towards
/// e_set + k_v (v_ref - |v_term|).
/// States {delta, dw, e}; algebraics {e_d, e_q, p}; inputs {p_ref, e_set, v_ref};
/// ports {i_d, i_q} (output current) and {v_d, v_q} (regulated terminal).
inline dae::Fragment vsm_source(const std::string& name, const VsmParams& p, double omega_n, double e0, double delta0,
                                double p_ref) {
    p.validate();
    const double vb = std::max(e0, 1.0);
    dae::Fragment fr;
    fr.name = name;
    fr.states = {{"delta", "rad", delta0, 1.0}, {"dw", "pu", 0.0, 1e-2}, {"e", "V", e0, vb}};
    fr.algebraics = {{"e_d", "V", e0 * std::cos(delta0), vb},
                     {"e_q", "V", e0 * std::sin(delta0), vb},
                     {"p", "pu", p_ref, 1.0}};
    fr.inputs = {{"p_ref", "pu", p_ref, 1.0}, {"e_set", "V", e0, vb}, {"v_ref", "V", e0, vb}};
    fr.ports = {{"i_d", "A"}, {"i_q", "A"}, {"v_d", "V"}, {"v_q", "V"}};
    fr.residual = [p, omega_n](const dae::LocalView& v, std::span<double> f, std::span<double> g) {
        const double delta = v.x[0], dw = v.x[1], e = v.x[2];
        const double pe = 1.5 * (v.z[0] * v.port[0] + v.z[1] * v.port[1]) / p.rating;
        f[0] = omega_n * dw;
        f[1] = (v.u[0] - v.z[2] - p.d * dw) / (2.0 * p.h);
        const double vt = std::hypot(v.port[2], v.port[3]);
        f[2] = (v.u[1] + p.k_v * (v.u[2] - vt) - e) / p.t_v;
        g[0] = v.z[0] - e * std::cos(delta);
        g[1] = v.z[1] - e * std::sin(delta);
        g[2] = v.z[2] - pe;
    };
    return fr;
}

} // namespace thyrsim::net
