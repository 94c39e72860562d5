#pragma once

#include <cmath>
#include <complex>
#include <numbers>

namespace thyrsim {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kSqrt3 = std::numbers::sqrt3;
inline constexpr double kTwoPiOver3 = 2.0 * kPi / 3.0;

/// Instantaneous phase quantities (V or A). Unbalanced sets are allowed.
struct ThreePhase {
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;

    [[nodiscard]] double zero_sequence() const { return (a + b + c) / 3.0; }
};

/// A quantity in a rotating frame. Rectangular storage, polar views on demand.
struct DqPhasor {
    double d = 0.0;
    double q = 0.0;

    [[nodiscard]] double magnitude() const { return std::hypot(d, q); }
    /// Two-argument arctangent, range (-pi, pi]. Wraps near +-pi.
    [[nodiscard]] double angle() const { return std::atan2(q, d); }
    [[nodiscard]] std::complex<double> complex() const { return {d, q}; }

    static DqPhasor from_polar(double magnitude, double angle) {
        return {magnitude * std::cos(angle), magnitude * std::sin(angle)};
    }
    static DqPhasor from_complex(std::complex<double> z) { return {z.real(), z.imag()}; }

    friend DqPhasor operator+(DqPhasor l, DqPhasor r) { return {l.d + r.d, l.q + r.q}; }
    friend DqPhasor operator-(DqPhasor l, DqPhasor r) { return {l.d - r.d, l.q - r.q}; }
    friend DqPhasor operator*(double s, DqPhasor v) { return {s * v.d, s * v.q}; }
};

/// Amplitude-invariant Park transform (2/3 scaling). A balanced set of peak
/// amplitude V aligned with `theta` maps to (V, 0). Zero sequence is dropped.
inline DqPhasor park(const ThreePhase& x, double theta) {
    const double ca = std::cos(theta);
    const double cb = std::cos(theta - kTwoPiOver3);
    const double cc = std::cos(theta + kTwoPiOver3);
    const double sa = std::sin(theta);
    const double sb = std::sin(theta - kTwoPiOver3);
    const double sc = std::sin(theta + kTwoPiOver3);
    return {(2.0 / 3.0) * (x.a * ca + x.b * cb + x.c * cc),
            -(2.0 / 3.0) * (x.a * sa + x.b * sb + x.c * sc)};
}

/// x_k = d cos(theta - k 2pi/3) - q sin(theta - k 2pi/3).
inline ThreePhase inverse_park(const DqPhasor& v, double theta) {
    auto phase = [&](double th) { return v.d * std::cos(th) - v.q * std::sin(th); };
    return {phase(theta), phase(theta - kTwoPiOver3), phase(theta + kTwoPiOver3)};
}

/// Frame rotation v' = R(dtheta) v, mapping a vector into a frame advanced by
/// `dtheta` (grid frame -> PLL frame for dtheta = theta_pll).
inline DqPhasor rotate(const DqPhasor& v, double dtheta) {
    const double c = std::cos(dtheta);
    const double s = std::sin(dtheta);
    return {c * v.d + s * v.q, -s * v.d + c * v.q};
}

/// Stationary-frame space vector (alpha + j beta) of a three-phase set.
inline std::complex<double> space_vector(const ThreePhase& x) {
    return {(2.0 / 3.0) * (x.a - 0.5 * x.b - 0.5 * x.c), (x.b - x.c) / kSqrt3};
}

/// Inverse of `space_vector` with zero sequence set to zero.
inline ThreePhase from_space_vector(std::complex<double> s) {
    return {s.real(), -0.5 * s.real() + 0.5 * kSqrt3 * s.imag(),
            -0.5 * s.real() - 0.5 * kSqrt3 * s.imag()};
}

/// Ideal phase-shifting transformer (unity ratio): rotates the positive
/// sequence space vector by `shift` radians.
inline ThreePhase phase_shift(const ThreePhase& x, double shift) {
    return from_space_vector(space_vector(x) * std::polar(1.0, shift));
}

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::remainder(a, 2.0 * kPi);
    return a <= -kPi ? a + 2.0 * kPi : a;
}

} // namespace thyrsim
