#pragma once

// Shared fixtures for the unit tests.

#include "thyrsim/rectifier_switching.hpp"

namespace thyrsim::fixtures {

/// Switching bridge fed from a stiff source, current-source load, fixed firing angle.
inline sw::SwitchingParams current_source_bridge(double v_m, double alpha, double i_dc, double l_c, int pulses = 6) {
    sw::SwitchingParams p;
    p.source.v_peak = v_m;
    p.source.frequency = 50.0;
    p.source.commutation_inductance = l_c;
    p.pulses = pulses;
    p.voltage_base = v_m > 0.0 ? v_m : 1.0;
    p.load = sw::LoadKind::CurrentSource;
    p.i_set = i_dc;
    p.alpha = alpha;
    return p;
}

/// Periodic steady state reached from a locked PLL.
inline sw::PeriodicSteadyState settle(sw::SwitchingSimulator& sim, double tol = 1e-9, int max_cycles = 50) {
    const auto& p = sim.params();
    sim.initialize(0.0, p.i_set, 0.0, 0.0, 0.0, 0.0);
    return sw::run_to_periodic_steady_state(sim, tol, max_cycles);
}

} // namespace thyrsim::fixtures
