#pragma once

// Frequency scans by sinusoidal injection and single-bin Fourier projection.
//
// A scan drives a `Runner` (any simulated plant) once per frequency and
// injection axis. Windows span an integer number of periods of both the
// injected tone and the fundamental, so that switching harmonics and their
// sidebands are orthogonal to the measured bin.

#include "thyrsim/errors.hpp"
#include "thyrsim/frames.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace thyrsim::scan {

using cplx = std::complex<double>;

enum class Channel { Zout, Ydd, Ydq, Yqd, Yqq };

inline std::string channel_name(Channel c) {
    switch (c) {
    case Channel::Zout: return "Z_out";
    case Channel::Ydd: return "Y_dd";
    case Channel::Ydq: return "Y_dq";
    case Channel::Yqd: return "Y_qd";
    case Channel::Yqq: return "Y_qq";
    }
    return "?";
}

struct FrequencyResponse {
    Channel channel = Channel::Zout;
    std::string model;
    std::vector<double> f_hz;
    std::vector<cplx> value;
    std::vector<bool> shifted;  ///< frequency moved off a grid/switching harmonic

    [[nodiscard]] std::size_t size() const { return f_hz.size(); }
};

// ------------------------------------------------------------- planning

struct ScanPlan {
    double f_min = 1.0;
    double f_max = 1000.0;
    int points = 40;
    std::vector<double> frequencies;  ///< explicit grid; overrides f_min/f_max/points
    double amplitude = 0.01;          ///< fraction of the operating value
    double settle_cycles = 10.0;      ///< fundamental cycles before measuring
    double measure_periods = 10.0;    ///< perturbation periods per window
    double min_measure_cycles = 5.0;  ///< fundamental cycles per window, lower bound
    double f_nominal = 50.0;
    double f_switching = 300.0;
    double consistency_tolerance = 0.02;  ///< between two consecutive windows
    double nonlinear_tolerance = 0.1;     ///< |X(2f)| / |X(f)| on the response

    void validate() const {
        if (frequencies.empty() && (!(f_min > 0.0) || !(f_max > f_min) || points < 1))
            throw InvalidParameter("scan: need 0 < f_min < f_max and points >= 1");
        if (!(amplitude > 0.0) || amplitude > 0.05) throw InvalidParameter("scan: amplitude must be in (0, 0.05]");
        if (!(f_nominal > 0.0)) throw InvalidParameter("scan: f_nominal must be > 0");
    }
};

struct PlannedFrequency {
    double requested = 0.0;
    double f = 0.0;          ///< frequency actually injected [Hz]
    bool shifted = false;
    double base_period = 0.0;  ///< shortest window with integer periods of f and f_nominal [s]
    double window = 0.0;       ///< measurement window [s]
    double settle = 0.0;       ///< settling time [s], a multiple of base_period
};

/// Greatest common divisor of two frequencies on a 1 mHz lattice.
inline double frequency_gcd(double a, double b) {
    const auto ia = static_cast<long long>(std::llround(a * 1000.0));
    const auto ib = static_cast<long long>(std::llround(b * 1000.0));
    return static_cast<double>(std::gcd(ia, ib)) / 1000.0;
}

/// Snaps to 0.1 Hz below 10 Hz and to 1 Hz above, after moving tones that
/// sit within 2% of a multiple of f_nominal or f_switching up by 3%.
inline PlannedFrequency plan_frequency(double requested, const ScanPlan& plan) {
    PlannedFrequency p;
    p.requested = requested;
    double f = requested;
    for (double base : {plan.f_nominal, plan.f_switching}) {
        if (!(base > 0.0)) continue;
        const double k = std::round(f / base);
        if (k >= 1.0 && std::abs(f - k * base) <= 0.02 * k * base) {
            f *= 1.03;
            p.shifted = true;
        }
    }
    f = f < 10.0 ? std::round(f * 10.0) / 10.0 : std::round(f);
    f = std::max(f, 0.1);
    p.f = f;
    p.base_period = 1.0 / frequency_gcd(f, plan.f_nominal);
    const double want = std::max(plan.measure_periods / f, plan.min_measure_cycles / plan.f_nominal);
    p.window = std::ceil(want / p.base_period - 1e-9) * p.base_period;
    p.settle = std::ceil(plan.settle_cycles / plan.f_nominal / p.base_period - 1e-9) * p.base_period;
    return p;
}

inline std::vector<PlannedFrequency> plan_frequencies(const ScanPlan& plan) {
    plan.validate();
    std::vector<double> req = plan.frequencies;
    if (req.empty()) {
        for (int k = 0; k < plan.points; ++k) {
            const double r = plan.points == 1 ? 0.0 : static_cast<double>(k) / (plan.points - 1);
            req.push_back(plan.f_min * std::pow(plan.f_max / plan.f_min, r));
        }
    }
    std::vector<PlannedFrequency> out;
    for (double f : req) out.push_back(plan_frequency(f, plan));
    return out;
}

// ----------------------------------------------------------- extraction

/// Complex amplitude X of x(t) = Re(X e^{j w t}) from uniform samples
/// x[k] = x(k dt), k = 0..N-1, spanning an integer number of periods.
inline cplx extract_tone(std::span<const double> samples, double dt, double f_hz, double t0 = 0.0) {
    const double n = static_cast<double>(samples.size());
    const double periods = n * dt * f_hz;
    if (samples.empty() || std::abs(periods - std::round(periods)) > 1e-6 || std::round(periods) < 1.0)
        throw WindowMismatch("extract_tone: window is not an integer number of periods");
    const double w = 2.0 * kPi * f_hz;
    cplx acc{};
    for (std::size_t k = 0; k < samples.size(); ++k) acc += samples[k] * std::polar(1.0, -w * (t0 + static_cast<double>(k) * dt));
    return 2.0 * acc / n;
}

/// Running trapezoidal projection of several signals onto e^{-j w t} over
/// [t_start, t_end]. Samples must arrive in time order; segments straddling
/// a window edge are clipped with linear interpolation. The first in-window
/// value of each channel is subtracted first, which leaves the integral over
/// whole periods unchanged but keeps large DC levels out of the rounding.
class ToneAccumulator {
public:
    ToneAccumulator(std::size_t channels, double f_hz, double t_start, double t_end)
        : w_(2.0 * kPi * f_hz), t0_(t_start), t1_(t_end), acc_(channels), acc2_(channels), prev_(channels),
          offset_(channels) {}

    void add(double t, std::span<const double> x) {
        if (have_prev_ && t > t_prev_) {
            const double a = std::max(t_prev_, t0_), b = std::min(t, t1_);
            if (b > a) {
                const double h = t - t_prev_;
                const double ra = (a - t_prev_) / h, rb = (b - t_prev_) / h;
                if (!have_offset_) {
                    for (std::size_t c = 0; c < acc_.size(); ++c) offset_[c] = prev_[c] + ra * (x[c] - prev_[c]);
                    have_offset_ = true;
                }
                const cplx ea = std::polar(1.0, -w_ * a), eb = std::polar(1.0, -w_ * b);
                for (std::size_t c = 0; c < acc_.size(); ++c) {
                    const double xa = prev_[c] + ra * (x[c] - prev_[c]) - offset_[c];
                    const double xb = prev_[c] + rb * (x[c] - prev_[c]) - offset_[c];
                    acc_[c] += 0.5 * (b - a) * (xa * ea + xb * eb);
                    acc2_[c] += 0.5 * (b - a) * (xa * ea * ea + xb * eb * eb);
                }
                covered_ = std::max(covered_, b);
            }
        }
        for (std::size_t c = 0; c < acc_.size(); ++c) prev_[c] = x[c];
        t_prev_ = t;
        have_prev_ = true;
    }

    [[nodiscard]] bool complete() const { return covered_ >= t1_ - 1e-9; }
    /// Complex amplitude of channel c at f.
    [[nodiscard]] cplx amplitude(std::size_t c) const { return 2.0 * acc_[c] / (t1_ - t0_); }
    /// Complex amplitude of channel c at 2f.
    [[nodiscard]] cplx second_harmonic(std::size_t c) const { return 2.0 * acc2_[c] / (t1_ - t0_); }

private:
    double w_, t0_, t1_;
    std::vector<cplx> acc_, acc2_;
    std::vector<double> prev_, offset_;
    double t_prev_ = 0.0;
    bool have_prev_ = false;
    bool have_offset_ = false;
    double covered_ = -1e300;
};

// --------------------------------------------------------------- runner

struct Signals {
    double t = 0.0;
    double v_dc = 0.0;
    double i_dc = 0.0;
    DqPhasor v{};  ///< source EMF, synchronous frame
    DqPhasor i{};  ///< rectifier AC current, synchronous frame
};

enum class Injection { DcCurrent, VoltageD, VoltageQ };

struct InjectionSpec {
    Injection kind = Injection::DcCurrent;
    double amplitude = 0.0;  ///< absolute [A] or [V]
    double f_hz = 0.0;
    double t_end = 0.0;
    double max_dt = 0.0;     ///< integrator step bound; windows are multiples of it
};

/// Simulates the plant from its steady state (t = 0) with the injection
/// a sin(2 pi f t) applied from t = 0, reporting signals in time order.
using Runner = std::function<void(const InjectionSpec&, const std::function<void(const Signals&)>&)>;

/// Number of worker threads: THYRSIM_THREADS, else 1.
inline unsigned worker_count() {
    if (const char* env = std::getenv("THYRSIM_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return static_cast<unsigned>(n);
    }
    return 1;
}

/// Runs body(i) for i in [0, n) on `workers` threads; rethrows the first error.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body, unsigned workers = worker_count()) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr err;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < std::min<std::size_t>(workers, n); ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    const std::lock_guard<std::mutex> lock(mu);
                    if (!err) err = std::current_exception();
                }
            }
        });
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
}

/// Wraps a runner so that every reported sample carries additive Gaussian
/// noise with per-signal standard deviation `sigma` (order as in
/// signal_vector). Each injection gets its own generator seeded from `seed`,
/// the injection kind and the frequency, so results do not depend on the
/// scheduling of parallel jobs.
inline Runner with_noise(Runner run, std::array<double, 6> sigma, std::uint64_t seed) {
    return [run = std::move(run), sigma, seed](const InjectionSpec& spec, const std::function<void(const Signals&)>& sink) {
        const auto f_key = static_cast<std::uint64_t>(std::llround(spec.f_hz * 1000.0));
        std::seed_seq seq{seed, static_cast<std::uint64_t>(spec.kind), f_key};
        std::mt19937_64 rng(seq);
        std::normal_distribution<double> n01(0.0, 1.0);
        run(spec, [&](const Signals& s) {
            Signals o = s;
            o.v_dc += sigma[0] * n01(rng);
            o.i_dc += sigma[1] * n01(rng);
            o.v.d += sigma[2] * n01(rng);
            o.v.q += sigma[3] * n01(rng);
            o.i.d += sigma[4] * n01(rng);
            o.i.q += sigma[5] * n01(rng);
            sink(o);
        });
    };
}

/// Signal order used by measurements: v_dc, i_dc, v_d, v_q, i_d, i_q.
inline std::array<double, 6> signal_vector(const Signals& s) { return {s.v_dc, s.i_dc, s.v.d, s.v.q, s.i.d, s.i.q}; }

struct TwoWindows {
    std::array<cplx, 6> a{}, b{}, b2{};
};

/// Runs one injection and projects all six signals over two consecutive windows.
inline TwoWindows measure(const Runner& run, Injection kind, double amplitude, const PlannedFrequency& pf, double max_dt) {
    const double t_a = pf.settle, t_b = pf.settle + pf.window, t_e = pf.settle + 2.0 * pf.window;
    ToneAccumulator acc_a(6, pf.f, t_a, t_b), acc_b(6, pf.f, t_b, t_e);
    InjectionSpec spec{kind, amplitude, pf.f, t_e, max_dt};
    run(spec, [&](const Signals& s) {
        const auto v = signal_vector(s);
        acc_a.add(s.t, v);
        acc_b.add(s.t, v);
    });
    if (!acc_a.complete() || !acc_b.complete()) throw NotSettled("scan: runner stopped before the end of the window");
    TwoWindows tw;
    for (std::size_t c = 0; c < 6; ++c) {
        tw.a[c] = acc_a.amplitude(c);
        tw.b[c] = acc_b.amplitude(c);
        tw.b2[c] = acc_b.second_harmonic(c);
    }
    return tw;
}

/// NotSettled when windows A and B differ by more than tol * |reference|.
inline void check_settled(cplx a, cplx b, double tol, double f, double reference = -1.0) {
    if (reference < 0.0) reference = std::abs(b);
    if (std::abs(a - b) > tol * reference) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "scan: response at %.4g Hz changed by %.3g%% between windows", f,
                      100.0 * std::abs(a - b) / std::abs(b));
        throw NotSettled(buf);
    }
}

inline void check_linear(cplx fundamental, cplx second, double tol, double f) {
    if (std::abs(second) > tol * std::abs(fundamental)) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "scan: second harmonic at %.4g Hz is %.3g%% of the response", f,
                      100.0 * std::abs(second) / std::abs(fundamental));
        throw NonlinearResponse(buf);
    }
}

/// Step bound used for a tone: at most 50 us and 1/(100 f), dividing the base period.
inline double step_for(const PlannedFrequency& pf, double dt_max = 50e-6) {
    const double want = std::min(dt_max, 1.0 / (100.0 * pf.f));
    return pf.base_period / std::ceil(pf.base_period / want - 1e-9);
}

/// Z_out(f) = -v_dc / i_dc with a sinusoidal DC current injection of
/// amplitude plan.amplitude * i_operating.
inline FrequencyResponse scan_dc_impedance(const Runner& run, const ScanPlan& plan, double i_operating,
                                           const std::string& model = "") {
    const auto freqs = plan_frequencies(plan);
    FrequencyResponse fr;
    fr.channel = Channel::Zout;
    fr.model = model;
    fr.f_hz.resize(freqs.size());
    fr.value.resize(freqs.size());
    fr.shifted.resize(freqs.size());
    parallel_for(freqs.size(), [&](std::size_t k) {
        const auto& pf = freqs[k];
        const TwoWindows tw = measure(run, Injection::DcCurrent, plan.amplitude * std::abs(i_operating), pf, step_for(pf));
        const cplx za = -tw.a[0] / tw.a[1];
        const cplx zb = -tw.b[0] / tw.b[1];
        check_settled(za, zb, plan.consistency_tolerance, pf.f);
        check_linear(tw.b[0], tw.b2[0], plan.nonlinear_tolerance, pf.f);
        fr.f_hz[k] = pf.f;
        fr.value[k] = zb;
        fr.shifted[k] = pf.shifted;
    });
    return fr;
}

/// The four dq admittances from separate d- and q-axis voltage injections of
/// amplitude plan.amplitude * v_operating. Order: Y_dd, Y_dq, Y_qd, Y_qq with
/// Y_xy = i_x / v_y.
inline std::array<FrequencyResponse, 4> scan_ac_admittance(const Runner& run, const ScanPlan& plan, double v_operating,
                                                           const std::string& model = "") {
    const auto freqs = plan_frequencies(plan);
    std::array<FrequencyResponse, 4> out;
    const std::array<Channel, 4> ch = {Channel::Ydd, Channel::Ydq, Channel::Yqd, Channel::Yqq};
    for (std::size_t c = 0; c < 4; ++c) {
        out[c].channel = ch[c];
        out[c].model = model;
        out[c].f_hz.resize(freqs.size());
        out[c].value.resize(freqs.size());
        out[c].shifted.resize(freqs.size());
    }
    parallel_for(2 * freqs.size(), [&](std::size_t job) {
        const std::size_t k = job / 2;
        const bool d_axis = job % 2 == 0;
        const auto& pf = freqs[k];
        const TwoWindows tw = measure(run, d_axis ? Injection::VoltageD : Injection::VoltageQ,
                                      plan.amplitude * std::abs(v_operating), pf, step_for(pf));
        const std::size_t vin = d_axis ? 2 : 3;
        for (std::size_t r = 0; r < 2; ++r) {
            const std::size_t iout = 4 + r;  // i_d, i_q
            const cplx ya = tw.a[iout] / tw.a[vin];
            const cplx yb = tw.b[iout] / tw.b[vin];
            // a weak cross channel is judged against the stronger one of the pair
            const double ref = std::max(std::abs(tw.b[4]), std::abs(tw.b[5])) / std::abs(tw.b[vin]);
            check_settled(ya, yb, plan.consistency_tolerance, pf.f, ref);
            const std::size_t idx = r * 2 + (d_axis ? 0 : 1);  // Y_dd, Y_dq, Y_qd, Y_qq
            out[idx].f_hz[k] = pf.f;
            out[idx].value[k] = yb;
            out[idx].shifted[k] = pf.shifted;
        }
    });
    return out;
}

// ------------------------------------------------------------------- I/O

inline double magnitude_db(cplx z) { return 20.0 * std::log10(std::abs(z)); }
inline double phase_deg(cplx z) { return std::arg(z) * 180.0 / kPi; }

/// Bode CSV: f_hz, mag_db, phase_deg, re, im.
inline void write_bode_csv(std::ostream& os, const FrequencyResponse& fr) {
    os << "f_hz,mag_db,phase_deg,re,im\n";
    char buf[160];
    for (std::size_t k = 0; k < fr.size(); ++k) {
        const cplx z = fr.value[k];
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%.12g,%.12g\n", fr.f_hz[k], magnitude_db(z), phase_deg(z), z.real(),
                      z.imag());
        os << buf;
    }
}

inline FrequencyResponse read_bode_csv(std::istream& is) {
    FrequencyResponse fr;
    std::string line;
    if (!std::getline(is, line) || line.rfind("f_hz", 0) != 0) throw GridMismatch("bode csv: missing header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> v;
        while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
        if (v.size() < 5) throw GridMismatch("bode csv: short row");
        fr.f_hz.push_back(v[0]);
        fr.value.emplace_back(v[3], v[4]);
        fr.shifted.push_back(false);
    }
    return fr;
}

// --------------------------------------------------------------- compare

struct Tolerance {
    double mag_db = 1.0;
    double phase_deg = 5.0;
    double f_max = 1e300;  ///< points above are reported but not judged
    double f_min = 0.0;
};

struct ComparePoint {
    double f_hz = 0.0;
    double d_mag_db = 0.0;
    double d_phase_deg = 0.0;
    bool judged = false;
    bool pass = true;
};

struct CompareReport {
    std::vector<ComparePoint> points;
    double max_mag_db = 0.0, mean_mag_db = 0.0;
    double max_phase_deg = 0.0, mean_phase_deg = 0.0;
    bool pass = true;
};

/// Wrapped phase difference in degrees, in (-180, 180].
inline double phase_difference_deg(cplx a, cplx b) { return wrap_angle(std::arg(a) - std::arg(b)) * 180.0 / kPi; }

inline CompareReport compare(const FrequencyResponse& a, const FrequencyResponse& b, const Tolerance& tol) {
    if (a.size() != b.size()) throw GridMismatch("compare: responses have different point counts");
    CompareReport rep;
    std::size_t judged = 0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (std::abs(a.f_hz[k] - b.f_hz[k]) > 1e-9 * std::max(1.0, std::abs(a.f_hz[k])))
            throw GridMismatch("compare: frequency grids differ at point " + std::to_string(k));
        ComparePoint p;
        p.f_hz = a.f_hz[k];
        p.d_mag_db = magnitude_db(a.value[k]) - magnitude_db(b.value[k]);
        p.d_phase_deg = phase_difference_deg(a.value[k], b.value[k]);
        p.judged = p.f_hz <= tol.f_max && p.f_hz >= tol.f_min;
        if (p.judged) {
            p.pass = std::abs(p.d_mag_db) <= tol.mag_db && std::abs(p.d_phase_deg) <= tol.phase_deg;
            rep.max_mag_db = std::max(rep.max_mag_db, std::abs(p.d_mag_db));
            rep.max_phase_deg = std::max(rep.max_phase_deg, std::abs(p.d_phase_deg));
            rep.mean_mag_db += std::abs(p.d_mag_db);
            rep.mean_phase_deg += std::abs(p.d_phase_deg);
            ++judged;
            rep.pass = rep.pass && p.pass;
        }
        rep.points.push_back(p);
    }
    if (judged) {
        rep.mean_mag_db /= static_cast<double>(judged);
        rep.mean_phase_deg /= static_cast<double>(judged);
    }
    return rep;
}

} // namespace thyrsim::scan
