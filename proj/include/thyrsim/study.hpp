#pragma once

// Study orchestration on top of scenario builders: time-domain runs,
// frequency scans, linearisation and parameter sweeps.

#include "thyrsim/scan.hpp"
#include "thyrsim/scenario.hpp"
#include "thyrsim/ssa.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace thyrsim::study {

using scenario::ModelKind;
using scenario::Scenario;

/// Per-fundamental-cycle min/max of the oracle DC current.
struct Envelope {
    double period = 0.02;
    std::vector<double> lo, hi;

    /// Cycle index of time t (relative to the start of the run), or npos past the end.
    [[nodiscard]] std::size_t cycle(double t) const {
        const double k = std::floor(t / period + 1e-9);
        if (k < 0.0 || k >= static_cast<double>(lo.size())) return static_cast<std::size_t>(-1);
        return static_cast<std::size_t>(k);
    }
    [[nodiscard]] bool contains(double t, double value) const {
        const std::size_t k = cycle(t);
        return k != static_cast<std::size_t>(-1) && value >= lo[k] && value <= hi[k];
    }
};

struct SimulationResult {
    ModelKind model = ModelKind::Emt;
    dae::Trajectory trajectory;
    std::optional<Envelope> envelope;
};

/// Samples of a trajectory outside the envelope, as (time, value) pairs.
inline std::vector<std::pair<double, double>> envelope_violations(const Envelope& env, const std::vector<double>& t,
                                                                  const std::vector<double>& v, double t_from = 0.0) {
    std::vector<std::pair<double, double>> out;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] < t_from || env.cycle(t[k]) == static_cast<std::size_t>(-1)) continue;
        if (!env.contains(t[k], v[k])) out.emplace_back(t[k], v[k]);
    }
    return out;
}

inline SimulationResult simulate_dae(const Scenario& s, ModelKind kind) {
    const auto sys = scenario::build_dae(s, kind);
    const auto eq = scenario::equilibrium(sys);
    dae::IntegrateOptions opt;
    opt.t0 = 0.0;
    opt.t_end = s.simulate.t_end;
    opt.dt = s.simulate.dt;
    opt.record_every = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(s.simulate.record_interval / s.simulate.dt)));
    opt.events = scenario::dae_events(s, sys);
    SimulationResult res;
    res.model = kind;
    res.trajectory = dae::integrate(sys.model, eq.point, opt);
    return res;
}

inline std::vector<sw::ScheduledChange> oracle_schedule(const Scenario& s, double t0) {
    std::vector<sw::ScheduledChange> out;
    for (const auto& e : s.simulate.events) {
        sw::ScheduledChange c;
        c.time = t0 + e.time;
        c.value = e.value;
        if (e.target == "electrolyzer.v_rev") c.target = sw::EventTarget::VRev;
        else if (e.target == "electrolyzer.idc_ref") c.target = sw::EventTarget::IRef;
        else if (e.target == "current_source.i_dc") c.target = sw::EventTarget::ISet;
        else {
            c.target = sw::EventTarget::Alpha;
            c.value = e.value * net::kDeg;
        }
        out.push_back(c);
    }
    return out;
}

/// Oracle run started from its periodic steady state; time is reported
/// relative to that instant. Rows are taken on the record grid; the envelope
/// uses every integration sub-step.
inline SimulationResult simulate_switching(const Scenario& s) {
    const auto emt_sys = scenario::build_dae(s, ModelKind::Emt);
    const auto emt_eq = scenario::equilibrium(emt_sys);
    const auto ss = scenario::oracle_steady_state(s, &emt_sys, &emt_eq.point);
    sw::SwitchingSimulator sim(ss.params);
    sim.set_state(ss.pss.state);
    const double t0 = ss.pss.state.t;
    sim.set_schedule(oracle_schedule(s, t0));

    SimulationResult res;
    res.model = ModelKind::Switching;
    auto& tr = res.trajectory;
    tr.columns = {"rect.v_dc [V]", "load.i_dc [A]", "rect.i_d [A]", "rect.i_q [A]", "rect.alpha_ref [rad]"};
    Envelope env;
    env.period = ss.period;
    const std::size_t cycles = static_cast<std::size_t>(std::ceil(s.simulate.t_end / env.period - 1e-9));
    env.lo.assign(cycles, std::numeric_limits<double>::infinity());
    env.hi.assign(cycles, -std::numeric_limits<double>::infinity());
    auto observe = [&](const sw::Sample& smp) {
        const double t = smp.t - t0;
        // a sample on a cycle boundary belongs to both neighbours
        for (const double tt : {t, t - 1e-12}) {
            const std::size_t k = env.cycle(std::max(tt, 0.0));
            if (k == static_cast<std::size_t>(-1)) continue;
            env.lo[k] = std::min(env.lo[k], smp.i_dc);
            env.hi[k] = std::max(env.hi[k], smp.i_dc);
        }
    };
    auto record = [&](const sw::Sample& smp) {
        tr.t.push_back(smp.t - t0);
        tr.rows.push_back({smp.v_dc, smp.i_dc, smp.i_dq.d, smp.i_dq.q, smp.alpha_ref});
    };
    record(sim.sample());
    const double step = s.simulate.record_interval;
    const auto n = static_cast<std::size_t>(std::llround(s.simulate.t_end / step));
    for (std::size_t k = 1; k <= n; ++k) {
        sim.advance_to(t0 + std::min(static_cast<double>(k) * step, s.simulate.t_end), observe);
        record(sim.sample());
    }
    for (const auto& e : s.simulate.events) {
        char buf[96];
        std::snprintf(buf, sizeof buf, " = %.10g", e.value);
        tr.events.push_back({e.time, e.target + buf});
    }
    res.envelope = env;
    return res;
}

inline SimulationResult simulate(const Scenario& s, ModelKind kind) {
    return kind == ModelKind::Switching ? simulate_switching(s) : simulate_dae(s, kind);
}

// ----------------------------------------------------------------- scans

/// Optional decoration of the plant runner, e.g. scan::with_noise.
using RunnerWrap = std::function<scan::Runner(scan::Runner)>;

inline scan::Runner wrapped(scan::Runner run, const RunnerWrap& wrap) { return wrap ? wrap(std::move(run)) : run; }

inline scan::FrequencyResponse scan_dc(const Scenario& s, ModelKind kind, const RunnerWrap& wrap = {}) {
    if (!s.current_source) throw scenario::KeyError("current_source", "DC impedance scans need a current-source load");
    const auto plan = scenario::scan_plan(s);
    const auto emt_sys = scenario::build_dae(s, ModelKind::Emt);
    const auto emt_eq = scenario::equilibrium(emt_sys);
    const double i_op = s.current_source->i_dc;
    if (kind == ModelKind::Switching) {
        const auto ss = scenario::oracle_steady_state(s, &emt_sys, &emt_eq.point);
        return scan::scan_dc_impedance(wrapped(scenario::oracle_runner(ss), wrap), plan, i_op, "switching");
    }
    if (kind == ModelKind::Emt) return scan::scan_dc_impedance(wrapped(scenario::dae_runner(emt_sys, emt_eq.point), wrap), plan, i_op, "emt");
    const auto sys = scenario::build_dae(s, kind);
    const auto eq = scenario::equilibrium(sys);
    return scan::scan_dc_impedance(wrapped(scenario::dae_runner(sys, eq.point), wrap), plan, i_op, scenario::model_name(kind));
}

inline std::array<scan::FrequencyResponse, 4> scan_ac(const Scenario& s, ModelKind kind, const RunnerWrap& wrap = {}) {
    const auto plan = scenario::scan_plan(s);
    const double v_op = s.source.v_peak;
    const auto emt_sys = scenario::build_dae(s, ModelKind::Emt);
    const auto emt_eq = scenario::equilibrium(emt_sys);
    if (kind == ModelKind::Switching) {
        const auto ss = scenario::oracle_steady_state(s, &emt_sys, &emt_eq.point);
        return scan::scan_ac_admittance(wrapped(scenario::oracle_runner(ss), wrap), plan, v_op, "switching");
    }
    if (kind == ModelKind::Emt) return scan::scan_ac_admittance(wrapped(scenario::dae_runner(emt_sys, emt_eq.point), wrap), plan, v_op, "emt");
    const auto sys = scenario::build_dae(s, kind);
    const auto eq = scenario::equilibrium(sys);
    return scan::scan_ac_admittance(wrapped(scenario::dae_runner(sys, eq.point), wrap), plan, v_op, scenario::model_name(kind));
}

// ---------------------------------------------------------- linearisation

struct Linearization {
    scenario::DaeSystem system;
    dae::EquilibriumReport equilibrium;
    ssa::LinearModel model;
};

inline Linearization linearize(const Scenario& s, ModelKind kind) {
    Linearization out{scenario::build_dae(s, kind), {}, {}};
    out.equilibrium = scenario::equilibrium(out.system);
    out.model = ssa::linearize(out.system.model, out.equilibrium.point);
    return out;
}

/// Small-signal response of one scan channel from the linearised model.
/// Z_out uses the current-source input and its derivative; Y_xy uses the
/// source perturbation input on axis y.
inline std::complex<double> linear_response(const Linearization& lin, scan::Channel ch, double f_hz) {
    const auto& sys = lin.system;
    const double w = 2.0 * kPi * f_hz;
    using C = std::complex<double>;
    if (ch == scan::Channel::Zout) {
        if (sys.in_iset.empty()) throw scenario::KeyError("current_source", "Z_out needs a current-source load");
        const auto y = lin.model.frequency_response({sys.v_dc}, {{sys.in_iset, C(1.0)}, {sys.in_didt, C(0.0, w)}}, w);
        return -y[0];
    }
    const bool from_d = ch == scan::Channel::Ydd || ch == scan::Channel::Yqd;
    const bool to_d = ch == scan::Channel::Ydd || ch == scan::Channel::Ydq;
    const auto y = lin.model.frequency_response({to_d ? sys.i_d : sys.i_q}, {{from_d ? sys.in_vpd : sys.in_vpq, C(1.0)}}, w);
    return y[0];
}

// ------------------------------------------------------------------ sweep

inline std::vector<double> sweep_path(const scenario::SweepConfig& c) {
    std::vector<double> out;
    for (int k = 0; k < c.points; ++k) {
        const double r = static_cast<double>(k) / (c.points - 1);
        out.push_back(c.spacing == "log" ? c.from * std::pow(c.to / c.from, r) : c.from + (c.to - c.from) * r);
    }
    return out;
}

inline ssa::SweepResult sweep(const Scenario& s) {
    const ModelKind kind = scenario::model_kind(s.sweep.model);
    std::optional<dae::OperatingPoint> warm;
    ssa::LinearizeAt at = [&](double value) {
        const Scenario sv = scenario::with_parameter(s, s.sweep.param, value);
        const auto sys = scenario::build_dae(sv, kind);
        const auto eq = scenario::equilibrium(sys, warm ? &*warm : nullptr);
        warm = eq.point;
        return ssa::linearize(sys.model, eq.point);
    };
    ssa::SweepOptions opt;
    opt.refine = s.sweep.refine;
    return ssa::parameter_sweep(at, sweep_path(s.sweep), opt);
}

} // namespace thyrsim::study
