#pragma once

// Switched-circuit thyristor bridge simulator used as the reference model.
//
// Each six-pulse bridge is fed from an ideal EMF behind L_c per phase. Between
// switching events the circuit is linear and integrated with RK4; firing and
// end-of-commutation instants are located by bisection. Thyristors are fired
// from a synchronous-frame PLL identical to the one in the averaged model.
// Two bridges in series behind ideal +-15 degree shifters form the 12-pulse
// variant.

#include "thyrsim/errors.hpp"
#include "thyrsim/frames.hpp"
#include "thyrsim/network.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

namespace thyrsim::sw {

using cplx = std::complex<double>;

enum class LoadKind { CurrentSource, Electrolyzer };

struct SwitchingParams {
    net::SourceParams source;
    int pulses = 6;
    double pll_kp = 1.0;
    double pll_ki = 100.0;
    double voltage_base = 1.0;
    double dt = 1e-6;
    double event_tolerance = 1e-9;  ///< event localisation [s]

    LoadKind load = LoadKind::CurrentSource;
    double i_set = 0.0;             ///< current-source value [A]
    net::ElectrolyzerParams electrolyzer;
    bool closed_loop = false;       ///< PI firing control (electrolyzer load)
    net::PiParams pi;
    double i_ref = 0.0;
    double alpha0 = 0.0;
    double alpha = 0.0;             ///< firing angle when not closed loop [rad]

    [[nodiscard]] int bridges() const { return pulses / 6; }
    [[nodiscard]] double omega_n() const { return source.omega(); }
    [[nodiscard]] double shift(int bridge) const {
        if (pulses == 6) return 0.0;
        return bridge == 0 ? kPi / 12.0 : -kPi / 12.0;
    }

    void validate() const {
        source.validate();
        if (pulses != 6 && pulses != 12) throw InvalidParameter("switching: pulses must be 6 or 12");
        if (!(dt > 0.0) || !(event_tolerance > 0.0)) throw InvalidParameter("switching: dt and event tolerance must be > 0");
        if (pll_kp < 0.0 || pll_ki < 0.0) throw InvalidParameter("switching: PLL gains must be >= 0");
        if (load == LoadKind::Electrolyzer) electrolyzer.validate();
        if (closed_loop) pi.validate();
    }
};

enum class Commutation : std::uint8_t { None, Upper, Lower };

/// Conduction pattern of one six-pulse bridge. Phases are 0, 1, 2 = a, b, c.
struct BridgeState {
    int upper = 0;                  ///< phase on the positive rail (incoming one while commutating)
    int lower = 1;                  ///< phase on the negative rail (incoming one while commutating)
    Commutation commutation = Commutation::None;
    int outgoing = 0;               ///< phase handing over its current
    double j_in = 0.0;              ///< incoming thyristor current [A]
    long long next_pulse = 0;       ///< ramp count n of the next firing

    /// Bit k-1 set when thyristor Tk conducts.
    [[nodiscard]] std::uint32_t conducting_mask() const;
};

/// Thyristor Tk (k = 1..6): odd k on the positive rail. T1 a+, T2 c-, T3 b+, T4 a-, T5 c+, T6 b-.
inline constexpr std::array<int, 6> kDevicePhase = {0, 2, 1, 0, 2, 1};
inline int device_for(int phase, bool upper_rail) {
    for (int k = 0; k < 6; ++k)
        if (kDevicePhase[static_cast<std::size_t>(k)] == phase && ((k % 2 == 0) == upper_rail)) return k + 1;
    return 0;
}

inline std::uint32_t BridgeState::conducting_mask() const {
    std::uint32_t m = 0;
    m |= 1u << (device_for(upper, true) - 1);
    m |= 1u << (device_for(lower, false) - 1);
    if (commutation == Commutation::Upper) m |= 1u << (device_for(outgoing, true) - 1);
    if (commutation == Commutation::Lower) m |= 1u << (device_for(outgoing, false) - 1);
    return m;
}

struct OracleState {
    double t = 0.0;
    double i_dc = 0.0;
    double v1 = 0.0;
    double x_i = 0.0;
    double theta_pll = 0.0;
    double x_pll = 0.0;
    std::array<BridgeState, 2> bridge{};
    double v_rev = 0.0;   ///< current electrolyzer reversible voltage (event target)
    double i_ref = 0.0;
    double i_set = 0.0;
    double alpha = 0.0;
};

/// Instantaneous terminal quantities.
struct Sample {
    double t = 0.0;
    double v_dc = 0.0;
    double i_dc = 0.0;
    double alpha_ref = 0.0;
    ThreePhase i_abc{};       ///< primary-side phase currents drawn by the rectifier
    DqPhasor i_dq{};          ///< the same in the synchronous frame
    DqPhasor v_dq{};          ///< source EMF in the synchronous frame
    std::uint32_t conducting = 0;
};

/// Small-signal injections applied on top of the scheduled operating point.
struct Perturbation {
    std::function<DqPhasor(double)> v_p;                     ///< series source voltage, synchronous frame
    std::function<std::pair<double, double>(double)> i_p;   ///< added load current and its slope
};

enum class EventTarget { VRev, IRef, ISet, Alpha };

struct ScheduledChange {
    double time = 0.0;
    EventTarget target = EventTarget::VRev;
    double value = 0.0;
};

struct SwitchingEvent {
    double t = 0.0;
    int bridge = 0;
    int device = 0;      ///< fired thyristor, or the incoming one for commutation end
    bool firing = true;  ///< false: commutation end
};

using SampleObserver = std::function<void(const Sample&)>;

class SwitchingSimulator {
public:
    explicit SwitchingSimulator(SwitchingParams p) : p_(std::move(p)) { p_.validate(); }

    [[nodiscard]] const SwitchingParams& params() const { return p_; }
    [[nodiscard]] const OracleState& state() const { return s_; }
    void set_state(const OracleState& s) { s_ = s; }
    void set_perturbation(Perturbation pert) { pert_ = std::move(pert); }
    void set_schedule(std::vector<ScheduledChange> changes) {
        schedule_ = std::move(changes);
        std::stable_sort(schedule_.begin(), schedule_.end(),
                         [](const ScheduledChange& a, const ScheduledChange& b) { return a.time < b.time; });
        next_change_ = 0;
        while (next_change_ < schedule_.size() && schedule_[next_change_].time < s_.t) ++next_change_;
    }
    void set_event_log(std::vector<SwitchingEvent>* log) { log_ = log; }

    /// Starts at time t from continuous states, with the conduction pattern
    /// implied by the firing ramp and no commutation in progress.
    void initialize(double t, double i_dc, double v1, double x_i, double theta_pll, double x_pll) {
        s_ = {};
        s_.t = t;
        s_.i_dc = i_dc;
        s_.v1 = v1;
        s_.x_i = x_i;
        s_.theta_pll = theta_pll;
        s_.x_pll = x_pll;
        s_.v_rev = p_.electrolyzer.v_rev;
        s_.i_ref = p_.i_ref;
        s_.i_set = p_.i_set;
        s_.alpha = p_.alpha;
        const Eval e = evaluate(s_.t, continuous(s_));
        for (int b = 0; b < p_.bridges(); ++b) {
            const double ramp = firing_ramp(b, s_.t, s_.theta_pll, e.alpha_ref);
            const long long n = static_cast<long long>(std::floor(ramp / kSector));
            BridgeState& br = s_.bridge[static_cast<std::size_t>(b)];
            const int last = static_cast<int>(((n % 6) + 6) % 6);             // index of last fired device
            const int prev = (last + 5) % 6;
            const int up = last % 2 == 0 ? last : prev;
            const int lo = last % 2 == 0 ? prev : last;
            br.upper = kDevicePhase[static_cast<std::size_t>(up)];
            br.lower = kDevicePhase[static_cast<std::size_t>(lo)];
            br.commutation = Commutation::None;
            br.j_in = 0.0;
            br.next_pulse = n + 1;
        }
        set_schedule(schedule_);
    }

    /// Current terminal sample.
    [[nodiscard]] Sample sample() const { return make_sample(s_.t, continuous(s_), evaluate(s_.t, continuous(s_))); }

    /// Advances to t_end exactly, calling `obs` at the start, after every
    /// sub-step and again after every discrete event (same time, new topology).
    void advance_to(double t_end, const SampleObserver& obs = {}) {
        if (obs) obs(sample());
        while (s_.t < t_end - 1e-15) {
            double h = std::min(p_.dt, t_end - s_.t);
            if (next_change_ < schedule_.size()) {
                const double tc = schedule_[next_change_].time;
                if (tc <= s_.t + 1e-15) {
                    apply_changes(obs);
                    continue;
                }
                h = std::min(h, tc - s_.t);
            }
            step(h, obs);
        }
        if (next_change_ < schedule_.size() && schedule_[next_change_].time <= s_.t + 1e-15) apply_changes(obs);
    }

private:
    static constexpr double kSector = kPi / 3.0;
    static constexpr int kN = 7;  // i_dc, v1, x_i, theta_pll, x_pll, j_in[2]
    using Vec = std::array<double, kN>;

    struct Eval {
        Vec dy{};
        double v_dc = 0.0;
        double alpha_ref = 0.0;
        cplx i_sv{};   ///< primary current space vector (stationary)
        cplx v_sv{};   ///< source EMF space vector (stationary)
    };

    static Vec continuous(const OracleState& s) {
        return {s.i_dc, s.v1, s.x_i, s.theta_pll, s.x_pll, s.bridge[0].j_in, s.bridge[1].j_in};
    }
    void store(const Vec& y) {
        s_.i_dc = y[0];
        s_.v1 = y[1];
        s_.x_i = y[2];
        s_.theta_pll = y[3];
        s_.x_pll = y[4];
        s_.bridge[0].j_in = y[5];
        s_.bridge[1].j_in = y[6];
    }

    [[nodiscard]] double firing_ramp(int b, double t, double theta_pll, double alpha_ref) const {
        return p_.omega_n() * t + theta_pll + p_.shift(b) + kSector - alpha_ref;
    }

    [[nodiscard]] Eval evaluate(double t, const Vec& y) const {
        Eval e;
        const double wn = p_.omega_n();
        const double lc = p_.source.commutation_inductance;
        DqPhasor vp{};
        if (pert_.v_p) vp = pert_.v_p(t);
        const cplx rot = std::polar(1.0, wn * t);
        e.v_sv = cplx(p_.source.v_peak + vp.d, vp.q) * rot;

        // PLL on the measured EMF
        const cplx v_pll = e.v_sv * std::polar(1.0, -(wn * t + y[3]));
        const double vq_pu = v_pll.imag() / p_.voltage_base;
        e.dy[3] = wn * p_.pll_kp * vq_pu + y[4];
        e.dy[4] = wn * p_.pll_ki * vq_pu;

        // DC current
        double i = y[0];
        double didt = 0.0;
        bool prescribed = p_.load == LoadKind::CurrentSource;
        if (prescribed) {
            i = s_.i_set;
            if (pert_.i_p) {
                const auto [di, dd] = pert_.i_p(t);
                i += di;
                didt = dd;
            }
        }

        // firing angle command
        if (p_.closed_loop) {
            const net::PiOutput pi = net::pi_firing_controller(i, s_.i_ref, y[2], p_.alpha0, p_.pi);
            e.alpha_ref = pi.alpha_ref;
            e.dy[2] = pi.dx;
        } else {
            e.alpha_ref = s_.alpha;
        }

        double e_sum = 0.0, l_sum = 0.0;
        std::array<std::array<double, 3>, 2> emf{};
        for (int b = 0; b < p_.bridges(); ++b) {
            const cplx sv = e.v_sv * std::polar(1.0, p_.shift(b));
            const ThreePhase x = from_space_vector(sv);
            auto& em = emf[static_cast<std::size_t>(b)];
            em = {x.a, x.b, x.c};
            const BridgeState& br = s_.bridge[static_cast<std::size_t>(b)];
            switch (br.commutation) {
            case Commutation::None:
                e_sum += em[br.upper] - em[br.lower];
                l_sum += 2.0 * lc;
                break;
            case Commutation::Upper:
                e_sum += 0.5 * (em[br.upper] + em[br.outgoing]) - em[br.lower];
                l_sum += 1.5 * lc;
                break;
            case Commutation::Lower:
                e_sum += em[br.upper] - 0.5 * (em[br.lower] + em[br.outgoing]);
                l_sum += 1.5 * lc;
                break;
            }
        }

        if (!prescribed) {
            const auto& el = p_.electrolyzer;
            didt = (e_sum - el.r0 * i - y[1] - s_.v_rev) / (l_sum + el.l_d);
            if (i <= 0.0 && didt < 0.0) didt = 0.0;  // bridge blocks reverse current
            e.dy[0] = didt;
            e.dy[1] = (i - y[1] / el.r1) / el.c1;
        }
        e.v_dc = e_sum - l_sum * didt;

        cplx i_sv{};
        for (int b = 0; b < p_.bridges(); ++b) {
            const BridgeState& br = s_.bridge[static_cast<std::size_t>(b)];
            const auto& em = emf[static_cast<std::size_t>(b)];
            const double j = y[5 + b];
            std::array<double, 3> ip{};
            switch (br.commutation) {
            case Commutation::None:
                ip[br.upper] = i;
                ip[br.lower] = -i;
                break;
            case Commutation::Upper:
                e.dy[5 + b] = 0.5 * didt + (em[br.upper] - em[br.outgoing]) / (2.0 * lc);
                ip[br.upper] = j;
                ip[br.outgoing] = i - j;
                ip[br.lower] = -i;
                break;
            case Commutation::Lower:
                e.dy[5 + b] = 0.5 * didt + (em[br.outgoing] - em[br.lower]) / (2.0 * lc);
                ip[br.upper] = i;
                ip[br.lower] = -j;
                ip[br.outgoing] = -(i - j);
                break;
            }
            i_sv += space_vector({ip[0], ip[1], ip[2]}) * std::polar(1.0, -p_.shift(b));
        }
        e.i_sv = i_sv;
        return e;
    }

    [[nodiscard]] Sample make_sample(double t, const Vec& y, const Eval& e) const {
        Sample smp;
        smp.t = t;
        smp.v_dc = e.v_dc;
        smp.i_dc = y[0];
        if (p_.load == LoadKind::CurrentSource) {
            smp.i_dc = s_.i_set;
            if (pert_.i_p) smp.i_dc += pert_.i_p(t).first;
        }
        smp.alpha_ref = e.alpha_ref;
        smp.i_abc = from_space_vector(e.i_sv);
        const cplx back = std::polar(1.0, -p_.omega_n() * t);
        smp.i_dq = DqPhasor::from_complex(e.i_sv * back);
        smp.v_dq = DqPhasor::from_complex(e.v_sv * back);
        smp.conducting = s_.bridge[0].conducting_mask() | (s_.bridge[1].conducting_mask() << 6);
        if (p_.pulses == 6) smp.conducting &= 0x3Fu;
        return smp;
    }

    [[nodiscard]] Vec rk4(double t, const Vec& y, double h) const {
        auto axpy = [](const Vec& a, const Vec& d, double s) {
            Vec r;
            for (int k = 0; k < kN; ++k) r[static_cast<std::size_t>(k)] = a[static_cast<std::size_t>(k)] + s * d[static_cast<std::size_t>(k)];
            return r;
        };
        const Vec k1 = evaluate(t, y).dy;
        const Vec k2 = evaluate(t + 0.5 * h, axpy(y, k1, 0.5 * h)).dy;
        const Vec k3 = evaluate(t + 0.5 * h, axpy(y, k2, 0.5 * h)).dy;
        const Vec k4 = evaluate(t + h, axpy(y, k3, h)).dy;
        Vec r;
        for (std::size_t k = 0; k < static_cast<std::size_t>(kN); ++k)
            r[k] = y[k] + h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
        if (p_.load == LoadKind::Electrolyzer && r[0] < 0.0 && y[0] >= 0.0) r[0] = 0.0;
        return r;
    }

    /// Event functions, each crossing from negative to >= 0.
    struct Crossings {
        std::array<double, 2> fire{-1.0, -1.0};
        std::array<double, 2> comm{-1.0, -1.0};
    };
    [[nodiscard]] Crossings crossings(double t, const Vec& y) const {
        Crossings c;
        const double a = evaluate(t, y).alpha_ref;
        const double i = p_.load == LoadKind::CurrentSource ? s_.i_set + (pert_.i_p ? pert_.i_p(t).first : 0.0) : y[0];
        for (int b = 0; b < p_.bridges(); ++b) {
            const BridgeState& br = s_.bridge[static_cast<std::size_t>(b)];
            c.fire[static_cast<std::size_t>(b)] =
                firing_ramp(b, t, y[3], a) - static_cast<double>(br.next_pulse) * kSector;
            if (br.commutation != Commutation::None) c.comm[static_cast<std::size_t>(b)] = y[5 + b] - i;
        }
        return c;
    }
    static bool any(const Crossings& c) {
        for (int b = 0; b < 2; ++b)
            if (c.fire[static_cast<std::size_t>(b)] >= 0.0 || c.comm[static_cast<std::size_t>(b)] >= 0.0) return true;
        return false;
    }

    void step(double h, const SampleObserver& obs) {
        const Vec y0 = continuous(s_);
        Vec y1 = rk4(s_.t, y0, h);
        Crossings c = crossings(s_.t + h, y1);
        if (!any(c)) {
            s_.t += h;
            store(y1);
            if (obs) obs(sample());
            return;
        }
        // bisection on the step length: lo has no event, hi has one
        double lo = 0.0, hi = h;
        while (hi - lo > p_.event_tolerance) {
            const double mid = 0.5 * (lo + hi);
            const Vec ym = rk4(s_.t, y0, mid);
            if (any(crossings(s_.t + mid, ym))) {
                hi = mid;
                y1 = ym;
            } else {
                lo = mid;
            }
        }
        if (hi != h) {
            y1 = rk4(s_.t, y0, hi);
            c = crossings(s_.t + hi, y1);
        }
        s_.t += hi;
        store(y1);
        if (obs) obs(sample());
        apply_switching(c);
        if (obs) obs(sample());
    }

    void apply_switching(const Crossings& c) {
        for (int b = 0; b < p_.bridges(); ++b) {
            BridgeState& br = s_.bridge[static_cast<std::size_t>(b)];
            const double i = p_.load == LoadKind::CurrentSource
                                 ? s_.i_set + (pert_.i_p ? pert_.i_p(s_.t).first : 0.0)
                                 : s_.i_dc;
            if (c.comm[static_cast<std::size_t>(b)] >= 0.0 && br.commutation != Commutation::None) {
                if (log_) log_->push_back({s_.t, b, device_for(br.commutation == Commutation::Upper ? br.upper : br.lower,
                                                               br.commutation == Commutation::Upper),
                                           false});
                br.commutation = Commutation::None;
                br.j_in = 0.0;
            }
            if (c.fire[static_cast<std::size_t>(b)] >= 0.0) {
                if (br.commutation != Commutation::None) {
                    char buf[96];
                    std::snprintf(buf, sizeof buf, "commutation not finished at next firing, t=%.9g s, bridge %d", s_.t, b);
                    throw CommutationFailure(buf);
                }
                const int k = static_cast<int>(((br.next_pulse % 6) + 6) % 6);
                const int phase = kDevicePhase[static_cast<std::size_t>(k)];
                const bool upper = k % 2 == 0;
                int& rail = upper ? br.upper : br.lower;
                if (rail != phase) {
                    if (i > 0.0) {
                        br.commutation = upper ? Commutation::Upper : Commutation::Lower;
                        br.outgoing = rail;
                        br.j_in = 0.0;
                    }
                    rail = phase;
                }
                if (log_) log_->push_back({s_.t, b, k + 1, true});
                ++br.next_pulse;
            }
        }
    }

    void apply_changes(const SampleObserver& obs) {
        while (next_change_ < schedule_.size() && schedule_[next_change_].time <= s_.t + 1e-15) {
            const auto& ch = schedule_[next_change_++];
            switch (ch.target) {
            case EventTarget::VRev: s_.v_rev = ch.value; break;
            case EventTarget::IRef: s_.i_ref = ch.value; break;
            case EventTarget::ISet: s_.i_set = ch.value; break;
            case EventTarget::Alpha: s_.alpha = ch.value; break;
            }
        }
        if (obs) obs(sample());
    }

    SwitchingParams p_;
    OracleState s_{};
    Perturbation pert_{};
    std::vector<ScheduledChange> schedule_;
    std::size_t next_change_ = 0;
    std::vector<SwitchingEvent>* log_ = nullptr;
};

struct CycleAverages {
    double v_dc = 0.0;
    double i_dc = 0.0;
    DqPhasor i_dq{};  ///< fundamental AC current, synchronous frame
};

/// Trapezoidal cycle averages over [t0, t0 + period] while advancing.
inline CycleAverages run_cycle(SwitchingSimulator& sim, double period, const SampleObserver& extra = {}) {
    CycleAverages acc;
    bool first = true;
    Sample prev{};
    const double t0 = sim.state().t;
    sim.advance_to(t0 + period, [&](const Sample& s) {
        if (!first) {
            const double h = s.t - prev.t;
            acc.v_dc += 0.5 * h * (s.v_dc + prev.v_dc);
            acc.i_dc += 0.5 * h * (s.i_dc + prev.i_dc);
            acc.i_dq.d += 0.5 * h * (s.i_dq.d + prev.i_dq.d);
            acc.i_dq.q += 0.5 * h * (s.i_dq.q + prev.i_dq.q);
        }
        first = false;
        prev = s;
        if (extra) extra(s);
    });
    acc.v_dc /= period;
    acc.i_dc /= period;
    acc.i_dq = (1.0 / period) * acc.i_dq;
    return acc;
}

struct PeriodicSteadyState {
    OracleState state;
    CycleAverages averages;
    int cycles = 0;
};

/// Runs whole fundamental cycles until successive cycle averages of DC
/// current and voltage change by less than `tol` (relative). The first cycle
/// is compared against the initial instantaneous values.
inline PeriodicSteadyState run_to_periodic_steady_state(SwitchingSimulator& sim, double tol = 1e-6, int max_cycles = 200) {
    const double period = 1.0 / sim.params().source.frequency;
    const Sample s0 = sim.sample();
    CycleAverages prev{s0.v_dc, s0.i_dc, s0.i_dq};
    auto rel = [](double a, double b) {
        const double den = std::max({std::abs(a), std::abs(b), 1e-300});
        return a == b ? 0.0 : std::abs(a - b) / den;
    };
    for (int k = 1; k <= max_cycles; ++k) {
        const CycleAverages cur = run_cycle(sim, period);
        const double dev = std::max(rel(cur.i_dc, prev.i_dc), rel(cur.v_dc, prev.v_dc));
        if (dev < tol) return {sim.state(), cur, k};
        prev = cur;
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "switching: no periodic steady state within %d cycles (tol %.3g)", max_cycles, tol);
    throw NoConvergence(buf);
}

/// CSV of terminal samples: time, v_dc, i_dc, i_a, i_b, i_c, conducting bitmask.
class SampleCsv {
public:
    SampleCsv(std::ostream& os, double interval) : os_(os), interval_(interval) {
        os_ << "time [s],v_dc [V],i_dc [A],i_a [A],i_b [A],i_c [A],conducting [mask]\n";
    }
    void operator()(const Sample& s) {
        if (s.t + 1e-12 < next_) return;
        next_ = s.t + interval_;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%.9g,%.10g,%.10g,%.10g,%.10g,%.10g,%u\n", s.t, s.v_dc, s.i_dc, s.i_abc.a, s.i_abc.b,
                      s.i_abc.c, static_cast<unsigned>(s.conducting));
        os_ << buf;
    }

private:
    std::ostream& os_;
    double interval_;
    double next_ = -1e300;
};

} // namespace thyrsim::sw
