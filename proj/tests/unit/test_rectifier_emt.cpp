#include "thyrsim/rectifier_emt.hpp"
#include "thyrsim/rectifier_rms.hpp"
#include "thyrsim/scenario.hpp"

#include "../oracles.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

using namespace thyrsim;

namespace {

constexpr double kW = 2.0 * kPi * 50.0;
constexpr double kDeg = kPi / 180.0;

using oracles::simpson;

/// Current scale that makes the overlap-equation drop term equal `x`.
double current_for_drop(double x, double v, double l_c) { return x * kSqrt3 * v / (2.0 * kW * l_c); }

} // namespace

// ---------------------------------------------------------- commutation

TEST(EmtCommutation, NoCurrentNoOverlap) {
    for (double a : {0.1, 0.7, 1.2})
        for (double th : {-0.05, 0.0, 0.03}) EXPECT_NEAR(emt::commutation_angle(a, th, 1.0, kW, 0.0, 1e-5).mu, 0.0, 1e-15);
}

TEST(EmtCommutation, SixtyDegreeBoundaryIsFlagged) {
    const auto o = emt::commutation_angle(0.0, 0.0, 1.0, kW, current_for_drop(0.5, 1.0, 1e-5), 1e-5);
    EXPECT_NEAR(o.mu, kPi / 3.0, 1e-12);
    EXPECT_TRUE(o.saturated);
}

TEST(EmtCommutation, OverlapMatchesIntegratedCommutationCurrent) {
    // integrate di/dtheta of the incoming phase until it carries I_dc
    const double v = 1.0, l_c = 1e-5, alpha = kPi / 6.0;
    const double i_dc = current_for_drop(0.2, v, l_c);
    const auto o = emt::commutation_angle(alpha, 0.0, v, kW, i_dc, l_c);
    EXPECT_NEAR(o.mu, 0.3183, 5e-5);
    EXPECT_NEAR(oracles::integrated_overlap(alpha, v, kW, i_dc, l_c), o.mu, 1e-9);
}

TEST(EmtCommutation, CurrentBoundaryConditions) {
    const double v = 110.0, l_c = 5e-6;
    for (double a : {0.2, 0.6, 1.0})
        for (double th_e : {-0.02, 0.0, 0.04}) {
            const double i_dc = 3000.0;
            const double mu = emt::commutation_angle(a, th_e, v, kW, i_dc, l_c).mu;
            EXPECT_NEAR(emt::commutation_current(-kPi / 3.0 + a, a, th_e, v, kW, l_c), 0.0, 1e-9);
            EXPECT_NEAR(emt::commutation_current(-kPi / 3.0 + a + mu, a, th_e, v, kW, l_c) / i_dc, 1.0, 1e-10);
        }
}

TEST(EmtCommutation, CurrentMatchesQuadratureOfSlope) {
    const double v = 110.0, l_c = 5e-6, a = 0.5, th_e = 0.01;
    const double k = kSqrt3 * v / (2.0 * kW * l_c);
    const double start = -kPi / 3.0 + a;
    for (double span : {0.05, 0.1, 0.2}) {
        const double integral = simpson([&](double th) { return k * std::sin(th + th_e + kPi / 3.0); }, start, start + span);
        const double closed = emt::commutation_current(start + span, a, th_e, v, kW, l_c);
        EXPECT_NEAR(closed, integral, 1e-9 * std::max(1.0, std::abs(closed)));
    }
}

// ----------------------------------------------------------- DC voltage

TEST(EmtVoltage, NoLoadValue) {
    EXPECT_NEAR(emt::dc_voltage(1.0, 0.0, 0.0, 0.0, 0.0, 1e-5), 3.0 * kSqrt3 / kPi, 1e-15);
    EXPECT_NEAR(emt::dc_voltage(1.0, 0.0, 0.0, 0.0, 0.0, 1e-5), 1.65399, 1e-5);
}

TEST(EmtVoltage, EffectiveInductanceBounds) {
    EXPECT_DOUBLE_EQ(emt::effective_inductance(kPi / 3.0, 2e-6), 1.5 * 2e-6);
    EXPECT_DOUBLE_EQ(emt::effective_inductance(0.0, 2e-6), 2.0 * 2e-6);
}

TEST(EmtVoltage, InductiveTerm) {
    const double e = emt::open_circuit_voltage(100.0, 0.0, 0.3, 0.1);
    EXPECT_NEAR(emt::dc_voltage(100.0, 0.0, 0.3, 0.1, 1e4, 1e-5), e - emt::effective_inductance(0.1, 1e-5) * 1e4, 1e-12);
}

TEST(EmtVoltage, MatchesOracleCycleAverage) {
    const double v = 110.0, l_c = 5e-6, alpha = 20.0 * kDeg, i_dc = 5000.0;
    sw::SwitchingSimulator sim(fixtures::current_source_bridge(v, alpha, i_dc, l_c));
    const auto pss = fixtures::settle(sim);
    const double mu = emt::commutation_angle(alpha, 0.0, v, kW, i_dc, l_c).mu;
    const double v_emt = emt::dc_voltage(v, 0.0, alpha, mu, 0.0, l_c);
    EXPECT_NEAR(pss.averages.v_dc / v_emt, 1.0, 0.005);
}

// ------------------------------------------------------------ AC current


TEST(EmtCurrents, ZeroOverlapValues) {
    const double i_dc = 100.0, a = 0.4;
    const DqPhasor e = emt::input_currents_exact(i_dc, a, 0.0, 0.0, 1.0, kW, 1e-5);
    EXPECT_NEAR(e.d, emt::kCurrentCoeff * i_dc * std::cos(a), 1e-12);
    EXPECT_NEAR(e.q, -emt::kCurrentCoeff * i_dc * std::sin(a), 1e-12);
    const DqPhasor l = emt::input_currents_linear(i_dc, a, 0.0);
    EXPECT_NEAR(l.d, e.d, 1e-12);
    EXPECT_NEAR(l.q, e.q, 1e-12);
}

TEST(EmtCurrents, ExactMatchesSegmentQuadrature) {
    const double v = 110.0, l_c = 5e-6, th_e = 0.01, alpha = 25.0 * kDeg;
    // choose I_dc so that the overlap is 12 degrees
    const double mu_target = 12.0 * kDeg;
    const double i_dc = (std::cos(alpha + th_e) - std::cos(alpha + th_e + mu_target)) * kSqrt3 * v / (2.0 * kW * l_c);
    const double mu = emt::commutation_angle(alpha, th_e, v, kW, i_dc, l_c).mu;
    ASSERT_NEAR(mu, mu_target, 1e-12);
    const DqPhasor closed = emt::input_currents_exact(i_dc, alpha, mu, th_e, v, kW, l_c);
    const DqPhasor quad = oracles::quadrature_currents(i_dc, alpha, mu, th_e, v, kW, l_c);
    const double scale = closed.magnitude();
    EXPECT_NEAR(quad.d, closed.d, 1e-6 * scale);
    EXPECT_NEAR(quad.q, closed.q, 1e-6 * scale);
}

TEST(EmtCurrents, LinearCloseToExactForSmallOverlap) {
    const double v = 110.0, l_c = 5e-6;
    for (double a : {10.0 * kDeg, 30.0 * kDeg, 60.0 * kDeg})
        for (double mu_deg : {0.5, 1.0, 2.0}) {
            const double mu = mu_deg * kDeg;
            const double i_dc = (std::cos(a) - std::cos(a + mu)) * kSqrt3 * v / (2.0 * kW * l_c);
            const DqPhasor e = emt::input_currents_exact(i_dc, a, mu, 0.0, v, kW, l_c);
            const DqPhasor l = emt::input_currents_linear(i_dc, a, mu);
            EXPECT_LT((e - l).magnitude() / e.magnitude(), 0.002) << "alpha " << a << " mu " << mu_deg;
        }
}

TEST(EmtCurrents, MagnitudeRatioToRmsIsCurrentFactor) {
    // the linear-ramp EMT current has magnitude 2 sqrt3/pi I_dc; the RMS model scales that by k_ic
    rms::RmsParams rp;
    rp.commutation_inductance = 5e-6;
    const double v = 110.0, a = 0.5, i_dc = 4000.0;
    const auto s = rms::rms_extended(v, a, i_dc, rp);
    const DqPhasor l = emt::input_currents_linear(i_dc, a, s.mu);
    EXPECT_NEAR(s.i_m / l.magnitude(), s.k_ic, 1e-12);
    EXPECT_GT(std::abs(s.k_ic - 1.0), 1e-5);  // the factor matters at this overlap
}

TEST(EmtCurrents, FundamentalMatchesOracle) {
    const double v = 110.0, l_c = 5e-6, alpha = 20.0 * kDeg, i_dc = 5000.0;
    sw::SwitchingSimulator sim(fixtures::current_source_bridge(v, alpha, i_dc, l_c));
    const auto pss = fixtures::settle(sim);
    const double mu = emt::commutation_angle(alpha, 0.0, v, kW, i_dc, l_c).mu;
    const DqPhasor i = emt::input_currents_exact(i_dc, alpha, mu, 0.0, v, kW, l_c);
    EXPECT_LT((pss.averages.i_dq - i).magnitude() / i.magnitude(), 0.01);
}

// -------------------------------------------------------------------- PLL

namespace {

emt::EmtParams pll_params(double v_base) {
    emt::EmtParams p;
    p.commutation_inductance = 5e-6;
    p.voltage_base = v_base;
    return p;
}

} // namespace

TEST(EmtPll, LockedAtZeroQ) {
    const auto o = emt::pll_derivatives(0.0, 0.0, {110.0, 0.0}, pll_params(110.0));
    EXPECT_EQ(o.dtheta, 0.0);
    EXPECT_EQ(o.dx, 0.0);
    EXPECT_EQ(o.theta_e, 0.0);
    EXPECT_DOUBLE_EQ(o.omega_pll, kW);
}

TEST(EmtPll, ZeroVoltageIsDegenerate) {
    EXPECT_THROW(emt::pll_derivatives(0.0, 0.0, {0.0, 0.0}, pll_params(110.0)), DegenerateVoltage);
    emt::EmtState s;
    EXPECT_THROW(emt::evaluate(pll_params(110.0), s, {0.0, 0.0}, 100.0, 0.3), DegenerateVoltage);
}

TEST(EmtPll, AngleStepFollowsSecondOrderResponse) {
    const auto p = pll_params(110.0);
    const double step = 0.01;
    const DqPhasor v = DqPhasor::from_polar(110.0, step);
    // linearised error dynamics: e'' + w_n K_p e' + w_n K_i e = 0, e(0) = step, e'(0) = -w_n K_p step
    const double a = p.omega_n * p.pll_kp, b = p.omega_n * p.pll_ki;
    const double sigma = -0.5 * a, wd = std::sqrt(b - 0.25 * a * a);
    auto analytic = [&](double t) {
        return step * std::exp(sigma * t) * (std::cos(wd * t) + (-0.5 * a / wd) * std::sin(wd * t));
    };
    double th = 0.0, x = 0.0, t = 0.0;
    const double h = 1e-6;
    auto rhs = [&](double th_, double x_) {
        const auto o = emt::pll_derivatives(th_, x_, v, p);
        return std::pair{o.dtheta, o.dx};
    };
    double worst = 0.0;
    for (int k = 0; k < 40000; ++k) {
        const auto [k1t, k1x] = rhs(th, x);
        const auto [k2t, k2x] = rhs(th + 0.5 * h * k1t, x + 0.5 * h * k1x);
        const auto [k3t, k3x] = rhs(th + 0.5 * h * k2t, x + 0.5 * h * k2x);
        const auto [k4t, k4x] = rhs(th + h * k3t, x + h * k3x);
        th += h / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        t += h;
        const double theta_e = emt::pll_derivatives(th, x, v, p).theta_e;
        worst = std::max(worst, std::abs(theta_e - analytic(t)));
    }
    EXPECT_LT(worst, 1e-3 * step);
    EXPECT_LT(std::abs(emt::pll_derivatives(th, x, v, p).theta_e), 0.01 * step);
}

// --------------------------------------------------------- firing filter

TEST(EmtFiringFilter, DefaultCornerIsHalfSwitchingFrequency) {
    emt::EmtParams p;
    EXPECT_NEAR(p.omega_z(), 2.0 * kPi * 150.0, 1e-12);
    p.pulses = 12;
    EXPECT_NEAR(p.omega_z(), 2.0 * kPi * 300.0, 1e-12);
    p.firing_filter_hz = 80.0;
    EXPECT_NEAR(p.omega_z(), 2.0 * kPi * 80.0, 1e-12);
}

TEST(EmtFiringFilter, RestAtReference) { EXPECT_EQ(emt::firing_filter_derivative(0.4, 0.4, 900.0), 0.0); }

TEST(EmtFiringFilter, StepReachesSixtyThreePercentAtTimeConstant) {
    emt::EmtParams p;
    const double wz = p.omega_z(), tau = 1.0 / wz;
    const int n = 10000;
    const double h = tau / n;
    double a = 0.0;
    for (int k = 0; k < n; ++k) {
        const double k1 = emt::firing_filter_derivative(a, 1.0, wz);
        const double k2 = emt::firing_filter_derivative(a + 0.5 * h * k1, 1.0, wz);
        const double k3 = emt::firing_filter_derivative(a + 0.5 * h * k2, 1.0, wz);
        const double k4 = emt::firing_filter_derivative(a + h * k3, 1.0, wz);
        a += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    EXPECT_NEAR(a, 1.0 - std::exp(-1.0), 1e-9);
    EXPECT_NEAR(a, 0.632, 5e-4);
}

TEST(EmtFiringFilter, MagnitudeAtCornerIsHalfPower) {
    const double wz = 2.0 * kPi * 150.0, eps = 1e-6;
    const double da = (emt::firing_filter_derivative(eps, 0.0, wz) - emt::firing_filter_derivative(-eps, 0.0, wz)) / (2 * eps);
    const double db = (emt::firing_filter_derivative(0.0, eps, wz) - emt::firing_filter_derivative(0.0, -eps, wz)) / (2 * eps);
    const std::complex<double> h = db / (std::complex<double>(0.0, wz) - da);
    EXPECT_NEAR(std::abs(h), 1.0 / std::sqrt(2.0), 1e-8);
}

// ----------------------------------------------------- model assembly

TEST(EmtModel, EquilibriumMatchesRmsExtended) {
    scenario::Scenario s;
    s.current_source = scenario::CurrentSourceConfig{5000.0, 25.0};
    const auto sys = scenario::build_dae(s, scenario::ModelKind::Emt);
    const auto eq = scenario::equilibrium(sys);
    rms::RmsParams rp;
    rp.commutation_inductance = s.source.l_c;
    const double v_rms = rms::rms_extended(s.source.v_peak, 25.0 * kDeg, 5000.0, rp).v_dc;
    EXPECT_NEAR(scenario::value_at(sys.model, sys.v_dc, eq.point) / v_rms, 1.0, 0.005);
}

TEST(EmtModel, TwelvePulseDoublesVoltage) {
    emt::EmtParams p6 = pll_params(110.0), p12 = pll_params(110.0);
    p12.pulses = 12;
    emt::EmtState s{0.4, 0.0, 0.0};
    const auto o6 = emt::evaluate(p6, s, {110.0, 0.0}, 3000.0, 0.4);
    const auto o12 = emt::evaluate(p12, s, {110.0, 0.0}, 3000.0, 0.4);
    EXPECT_NEAR(o12.e_dc, 2.0 * o6.e_dc, 1e-12 * o6.e_dc);
    EXPECT_NEAR(o12.l_eq, 2.0 * o6.l_eq, 1e-20);
}

TEST(EmtModel, TwelvePulseOracleHasOnlyCharacteristicHarmonics) {
    sw::SwitchingSimulator sim(fixtures::current_source_bridge(110.0, 30.0 * kDeg, 3000.0, 5e-6, 12));
    fixtures::settle(sim);
    const double period = 0.02;
    const double t0 = sim.state().t;
    std::array<std::complex<double>, 14> bins{};
    double t_prev = t0, i_prev = sim.sample().i_abc.a;
    sim.advance_to(t0 + period, [&](const sw::Sample& smp) {
        const double h = smp.t - t_prev;
        if (h > 0.0)
            for (int k = 1; k < 14; ++k) {
                const double w = 2.0 * kPi * 50.0 * k;
                bins[static_cast<std::size_t>(k)] += 0.5 * h *
                    (std::polar(i_prev, -w * (t_prev - t0)) + std::polar(smp.i_abc.a, -w * (smp.t - t0)));
            }
        t_prev = smp.t;
        i_prev = smp.i_abc.a;
    });
    const double fund = std::abs(bins[1]);
    EXPECT_LT(std::abs(bins[5]) / fund, 0.01);
    EXPECT_LT(std::abs(bins[7]) / fund, 0.01);
    EXPECT_GT(std::abs(bins[11]) / fund, 0.02);
    EXPECT_GT(std::abs(bins[13]) / fund, 0.02);
}

TEST(EmtModel, ParameterValidation) {
    emt::EmtParams p;
    EXPECT_THROW(emt::assemble_emt("r", p), InvalidParameter);
    p.commutation_inductance = 1e-6;
    p.pulses = 18;
    EXPECT_THROW(emt::assemble_emt("r", p), InvalidParameter);
}
