#include "thyrsim/rectifier_emt.hpp"
#include "thyrsim/rectifier_rms.hpp"
#include "thyrsim/rectifier_switching.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <map>

using namespace thyrsim;

namespace {

constexpr double kDeg = kPi / 180.0;
constexpr double kW = 2.0 * kPi * 50.0;

} // namespace

TEST(Switching, ConductionPatternAndKcl) {
    sw::SwitchingSimulator sim(fixtures::current_source_bridge(110.0, 30.0 * kDeg, 5000.0, 5e-6));
    fixtures::settle(sim);
    int two = 0, three = 0;
    sim.advance_to(sim.state().t + 0.04, [&](const sw::Sample& s) {
        const int n = std::popcount(s.conducting);
        EXPECT_TRUE(n == 2 || n == 3) << "t " << s.t;
        (n == 2 ? two : three)++;
        // odd devices sit on the positive rail
        const int upper = std::popcount(s.conducting & 0b010101u);
        const int lower = std::popcount(s.conducting & 0b101010u);
        EXPECT_GE(upper, 1);
        EXPECT_GE(lower, 1);
        EXPECT_EQ(upper + lower, n);
        EXPECT_NEAR(s.i_abc.a + s.i_abc.b + s.i_abc.c, 0.0, 1e-9 * 5000.0);
    });
    EXPECT_GT(two, 0);
    EXPECT_GT(three, 0);
}

TEST(Switching, DiodeLimitAtNoLoad) {
    sw::SwitchingSimulator sim(fixtures::current_source_bridge(1.0, 0.0, 0.0, 5e-6));
    const auto pss = fixtures::settle(sim);
    EXPECT_NEAR(pss.averages.v_dc, 3.0 * kSqrt3 / kPi, 1e-4);
}

TEST(Switching, SteadyStateMatchesExtendedRms) {
    const double v = 110.0, l_c = 5e-6, alpha = kPi / 3.0, i_dc = 4000.0;
    sw::SwitchingSimulator sim(fixtures::current_source_bridge(v, alpha, i_dc, l_c));
    const auto pss = fixtures::settle(sim);
    rms::RmsParams rp;
    rp.commutation_inductance = l_c;
    EXPECT_NEAR(pss.averages.v_dc / rms::rms_extended(v, alpha, i_dc, rp).v_dc, 1.0, 0.005);
}

TEST(Switching, CommutationDurationMatchesOverlap) {
    const double v = 110.0, l_c = 5e-6, alpha = 25.0 * kDeg, i_dc = 6000.0;
    sw::SwitchingSimulator sim(fixtures::current_source_bridge(v, alpha, i_dc, l_c));
    fixtures::settle(sim);
    std::vector<sw::SwitchingEvent> log;
    sim.set_event_log(&log);
    sim.advance_to(sim.state().t + 0.02);
    const double mu = emt::commutation_angle(alpha, 0.0, v, kW, i_dc, l_c).mu;
    std::map<int, double> fired;
    int checked = 0;
    for (const auto& e : log) {
        if (e.firing) {
            fired[e.device] = e.t;
        } else if (fired.count(e.device)) {
            EXPECT_NEAR(kW * (e.t - fired[e.device]), mu, 1.0 * kDeg);
            ++checked;
        }
    }
    EXPECT_GE(checked, 5);
}

TEST(Switching, OpenLoopElectrolyzerSettles) {
    auto p = fixtures::current_source_bridge(110.0, 30.0 * kDeg, 0.0, 5e-6);
    p.load = sw::LoadKind::Electrolyzer;
    p.electrolyzer = {20e-6, 0.8e-3, 3e-3, 10.0, 100.0};
    sw::SwitchingSimulator sim(p);
    // start near the operating point: v_dc ~ 150 V gives about 13 kA
    const double i0 = (150.0 - 100.0) / 3.8e-3;
    sim.initialize(0.0, i0, 3e-3 * i0, 0.0, 0.0, 0.0);
    const auto pss = sw::run_to_periodic_steady_state(sim, 1e-6, 200);
    EXPECT_LE(pss.cycles, 50);
    EXPECT_NEAR(pss.averages.v_dc, p.electrolyzer.steady_voltage(pss.averages.i_dc), 1e-3 * pss.averages.v_dc);
}

TEST(Switching, UnattainableToleranceThrows) {
    sw::SwitchingSimulator sim(fixtures::current_source_bridge(110.0, 30.0 * kDeg, 5000.0, 5e-6));
    sim.initialize(0.0, 5000.0, 0.0, 0.0, 0.0, 0.0);
    EXPECT_THROW(sw::run_to_periodic_steady_state(sim, 0.0, 5), NoConvergence);
}

TEST(Switching, ZeroSourceGivesZeroTrajectory) {
    sw::SwitchingSimulator sim(fixtures::current_source_bridge(0.0, 30.0 * kDeg, 0.0, 5e-6));
    sim.initialize(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    double worst = 0.0;
    const auto pss = sw::run_to_periodic_steady_state(sim, 1e-6, 5);
    sim.advance_to(sim.state().t + 0.02, [&](const sw::Sample& s) {
        worst = std::max({worst, std::abs(s.v_dc), std::abs(s.i_dc), std::abs(s.i_abc.a)});
    });
    EXPECT_EQ(pss.cycles, 1);
    EXPECT_EQ(worst, 0.0);
}

TEST(Switching, ScheduledChangeIsApplied) {
    sw::SwitchingSimulator sim(fixtures::current_source_bridge(110.0, 30.0 * kDeg, 5000.0, 5e-6));
    fixtures::settle(sim);
    const double t0 = sim.state().t;
    sim.set_schedule({{t0 + 0.005, sw::EventTarget::ISet, 6000.0}});
    sim.advance_to(t0 + 0.01);
    EXPECT_DOUBLE_EQ(sim.state().i_set, 6000.0);
    EXPECT_NEAR(sim.sample().i_dc, 6000.0, 1e-9);
}

TEST(Switching, InvalidParametersRejected) {
    auto p = fixtures::current_source_bridge(110.0, 0.3, 100.0, 5e-6);
    p.pulses = 9;
    EXPECT_THROW(sw::SwitchingSimulator{p}, InvalidParameter);
    p = fixtures::current_source_bridge(110.0, 0.3, 100.0, 0.0);
    EXPECT_THROW(sw::SwitchingSimulator{p}, InvalidParameter);
}
