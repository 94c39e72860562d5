#pragma once

// Independent numerical references shared by the unit and acceptance tests.
// They integrate the bridge waveforms directly instead of using the closed
// forms under test.

#include "thyrsim/frames.hpp"
#include "thyrsim/rectifier_emt.hpp"

#include <cmath>
#include <functional>
#include <limits>

namespace thyrsim::oracles {

/// Composite Simpson rule with n (even) panels.
inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int k = 1; k < n; ++k) s += f(a + k * h) * (k % 2 ? 4.0 : 2.0);
    return s * h / 3.0;
}

/// Overlap angle found by integrating the incoming-phase current slope with
/// RK4 from the firing instant and bisecting the step where it reaches i_dc.
inline double integrated_overlap(double alpha, double v, double omega, double i_dc, double l_c) {
    const double k = kSqrt3 * v / (2.0 * omega * l_c);
    auto slope = [&](double th) { return k * std::sin(th + kPi / 3.0); };
    const double h = 1e-5;
    const double start = alpha - kPi / 3.0;
    double th = start, i = 0.0;
    while (th - start < kPi) {
        const double next = i + h / 6.0 * (slope(th) + 4.0 * slope(th + 0.5 * h) + slope(th + h));
        if (next >= i_dc) {
            double lo = 0.0, hi = h;
            for (int it = 0; it < 60; ++it) {
                const double m = 0.5 * (lo + hi);
                const double im = i + m / 6.0 * (slope(th) + 4.0 * slope(th + 0.5 * m) + slope(th + m));
                (im < i_dc ? lo : hi) = m;
            }
            return th + 0.5 * (lo + hi) - start;
        }
        i = next;
        th += h;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

/// Phase-a current over one cycle of the PLL angle, built from the
/// commutation and conduction segments.
inline double phase_a_current(double th, double i_dc, double alpha, double mu, double th_e, double v, double omega,
                              double l_c) {
    auto com = [&](double x) { return emt::commutation_current(x, alpha, th_e, v, omega, l_c); };
    const double fire = alpha - kPi / 3.0;
    double x = std::fmod(th - fire, 2.0 * kPi);
    if (x < 0.0) x += 2.0 * kPi;
    double sign = 1.0;
    if (x >= kPi) x -= kPi, sign = -1.0;
    if (x < mu) return sign * com(fire + x);
    if (x < 2.0 * kPi / 3.0) return sign * i_dc;
    if (x < 2.0 * kPi / 3.0 + mu) return sign * (i_dc - com(fire + x - 2.0 * kPi / 3.0));
    return 0.0;
}

/// Cycle average of the Park-transformed bridge currents.
inline DqPhasor quadrature_currents(double i_dc, double alpha, double mu, double th_e, double v, double omega, double l_c) {
    auto abc = [&](double th) {
        return ThreePhase{phase_a_current(th, i_dc, alpha, mu, th_e, v, omega, l_c),
                          phase_a_current(th - kTwoPiOver3, i_dc, alpha, mu, th_e, v, omega, l_c),
                          phase_a_current(th + kTwoPiOver3, i_dc, alpha, mu, th_e, v, omega, l_c)};
    };
    // integrate piecewise so every kink sits on a panel boundary
    const double fire = alpha - kPi / 3.0;
    DqPhasor acc{};
    for (int seg = 0; seg < 6; ++seg) {
        const double a = fire + seg * kPi / 3.0;
        for (const auto& [lo, hi] : {std::pair{a, a + mu}, std::pair{a + mu, a + kPi / 3.0}}) {
            acc.d += simpson([&](double th) { return park(abc(th), th).d; }, lo, hi, 400);
            acc.q += simpson([&](double th) { return park(abc(th), th).q; }, lo, hi, 400);
        }
    }
    return (1.0 / (2.0 * kPi)) * acc;
}

} // namespace thyrsim::oracles
