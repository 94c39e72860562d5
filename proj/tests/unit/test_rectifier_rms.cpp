#include "thyrsim/rectifier_rms.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace thyrsim;

namespace {

rms::RmsParams params(double l_c, int pulses = 6) {
    rms::RmsParams p;
    p.commutation_inductance = l_c;
    p.pulses = pulses;
    return p;
}

} // namespace

TEST(RmsBasic, NoLoadVoltage) {
    const auto s = rms::rms_basic(1.0, 0.0, 0.0, params(10e-6));
    EXPECT_NEAR(s.v_dc, 3.0 * kSqrt3 / kPi, 1e-14);
    EXPECT_NEAR(s.v_dc, 1.65399, 1e-5);
}

TEST(RmsBasic, CurrentCoefficient) {
    const auto s = rms::rms_basic(1.0, 0.2, 1.0, params(10e-6));
    EXPECT_NEAR(s.i_m, 2.0 * kSqrt3 / kPi, 1e-14);
    EXPECT_NEAR(s.i_m, 1.10266, 1e-5);
    EXPECT_DOUBLE_EQ(s.phi, 0.2);
}

TEST(RmsBasic, CommutationDrop) {
    const auto p = params(10e-6);
    const auto s = rms::rms_basic(1.0, kPi / 3.0, 100.0, p);
    EXPECT_NEAR(s.v_dc, 0.5 * 3.0 * kSqrt3 / kPi - p.r_dc() * 100.0, 1e-14);
    EXPECT_NEAR(s.v_dc, 0.527, 1e-3);
}

TEST(RmsBasic, CommutationDropAgreesWithOracle) {
    sw::SwitchingSimulator sim(fixtures::current_source_bridge(1.0, kPi / 3.0, 100.0, 10e-6));
    const auto pss = fixtures::settle(sim);
    const auto s = rms::rms_basic(1.0, kPi / 3.0, 100.0, params(10e-6));
    EXPECT_NEAR(pss.averages.v_dc / s.v_dc, 1.0, 0.02);
}

TEST(RmsExtended, NoCurrentMeansNoOverlap) {
    const auto s = rms::rms_extended(1.0, 0.4, 0.0, params(10e-6));
    EXPECT_EQ(s.mu, 0.0);
    EXPECT_NEAR(s.v_dc, 3.0 * kSqrt3 / kPi * std::cos(0.4), 1e-14);
}

TEST(RmsExtended, OverlapAtHalfArgument) {
    const auto p = params(10e-6);
    const double i_dc = 0.5 * kSqrt3 / (2.0 * p.grid_omega * p.commutation_inductance);
    const auto s = rms::rms_extended(1.0, 0.0, i_dc, p);
    EXPECT_NEAR(s.mu, kPi / 3.0, 1e-12);
}

TEST(RmsExtended, CurrentFactorLimit) {
    EXPECT_NEAR(rms::current_factor(0.3, 1e-6), 1.0, 1e-6);
    EXPECT_EQ(rms::current_factor(0.3, 0.0), 1.0);
}

TEST(RmsExtended, ClosedFormVoltageMatchesBasicDrop) {
    // (cos a + cos(a + mu)) / 2 = cos a - R_dc I_dc / k_v V_m
    const auto p = params(10e-6);
    for (double a : {0.1, 0.5, 1.0})
        for (double i : {10.0, 100.0, 300.0}) {
            const auto e = rms::rms_extended(1.0, a, i, p);
            const auto b = rms::rms_basic(1.0, a, i, p);
            EXPECT_NEAR(e.v_dc, b.v_dc, 1e-12);
        }
}

TEST(RmsExtended, InfeasibleCommutationThrows) {
    EXPECT_THROW(rms::rms_extended(1.0, 0.0, 1e6, params(10e-6)), OutOfRange);
    EXPECT_THROW(rms::rms_extended(0.0, 0.0, 1.0, params(10e-6)), OutOfRange);
}

TEST(RmsExtended, PowerBalanceOverGrid) {
    const auto p = params(10e-6);
    for (double a = 0.05; a < 1.3; a += 0.1)
        for (double i : {1.0, 50.0, 150.0, 250.0}) {
            const auto s = rms::rms_extended(1.0, a, i, p);
            const double p_ac = 1.5 * 1.0 * s.i_m * std::cos(s.phi);
            EXPECT_NEAR(p_ac / (s.v_dc * i), 1.0, 0.005) << "alpha " << a << " i " << i;
        }
}

TEST(RmsPhasor, InPhaseAndQuadrature) {
    const auto in_phase = rms::rms_phasor_interface(1.0, 2.0, 0.0, 0.3);
    EXPECT_NEAR(std::arg(in_phase.ac_current), 0.3, 1e-15);
    const auto s = rms::rms_extended(1.0, kPi / 2.0, 0.0, params(10e-6));
    EXPECT_NEAR(s.phi, kPi / 2.0, 1e-12);
    const auto q = rms::rms_phasor_interface(s);
    EXPECT_NEAR(q.ac_current.real(), 0.0, 1e-12 * std::max(1.0, s.i_m));
}

TEST(RmsFiringAngle, InvertsExtendedModel) {
    const auto p = params(5e-6, 12);
    const double a = rms::firing_angle_for(110.0, 300.0, 1e4, p);
    EXPECT_NEAR(rms::rms_extended(110.0, a, 1e4, p).v_dc, 300.0, 1e-9);
    EXPECT_THROW(rms::firing_angle_for(110.0, 1e4, 1e4, p), OutOfRange);
}

TEST(RmsParams, Validation) {
    EXPECT_THROW(rms::assemble_rms("r", params(0.0)), InvalidParameter);
    EXPECT_THROW(rms::assemble_rms("r", params(1e-6, 8)), InvalidParameter);
}
