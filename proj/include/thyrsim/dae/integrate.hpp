#pragma once

// Fixed-step implicit trapezoidal integration of a semi-explicit index-1 DAE.

#include "thyrsim/dae/equilibrium.hpp"
#include "thyrsim/dae/model.hpp"
#include "thyrsim/dae/newton.hpp"
#include "thyrsim/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace thyrsim::dae {

/// Sets input `input` (full name) to `value` at time `time`.
struct InputEvent {
    double time = 0.0;
    std::string input;
    double value = 0.0;
};

struct LoggedEvent {
    double time = 0.0;
    std::string description;
};

struct Trajectory {
    std::vector<std::string> columns;  ///< "name [unit]" in registry order: states, algebraics, inputs
    std::vector<double> t;
    std::vector<std::vector<double>> rows;  ///< one row per sample, without time
    std::vector<LoggedEvent> events;

    [[nodiscard]] std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i].substr(0, columns[i].find(" [")) == name) return i;
        throw CompositionError("trajectory: no column '" + name + "'");
    }

    [[nodiscard]] std::vector<double> series(const std::string& name) const {
        const std::size_t c = column(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[c]);
        return out;
    }

    void write_csv(std::ostream& os) const {
        os << "time [s]";
        for (const auto& c : columns) os << ',' << c;
        os << '\n';
        char buf[32];
        for (std::size_t k = 0; k < t.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%.9g", t[k]);
            os << buf;
            for (double v : rows[k]) {
                std::snprintf(buf, sizeof buf, "%.10g", v);
                os << ',' << buf;
            }
            os << '\n';
        }
    }
};

using InputModifier = std::function<void(double t, Vector& u)>;
using StepObserver = std::function<void(double t, const Vector& x, const Vector& z, const Vector& u)>;

struct IntegrateOptions {
    double t0 = 0.0;
    double t_end = 0.0;
    double dt = 50e-6;
    double tolerance = 1e-10;      ///< scaled Newton tolerance per step
    int max_halvings = 6;
    std::size_t record_every = 1;  ///< 0 disables recording
    std::vector<InputEvent> events;
    InputModifier input_modifier;  ///< applied on top of the event-updated inputs
    StepObserver observer;         ///< called after every accepted step and at t0
};

inline std::vector<std::string> trajectory_columns(const DaeModel& m) {
    std::vector<std::string> cols;
    for (const auto* reg : {&m.states(), &m.algebraics(), &m.inputs()})
        for (const auto& v : *reg) cols.push_back(v.name + " [" + v.unit + "]");
    return cols;
}

/// Solves g(x, u, z) = 0 for z at fixed x.
inline Vector solve_algebraic(const DaeModel& m, double t, const Vector& x, const Vector& z_guess, const Vector& u,
                              double tolerance = 1e-10) {
    if (m.nz() == 0) return z_guess;
    SystemFn fn = [&](const Vector& z, Vector& r) {
        Vector f;
        m.residual(t, x, z, u, f, r);
        return true;
    };
    NewtonSolver solver(m.z_scale(), m.g_base());
    NewtonOptions opt;
    opt.tolerance = tolerance;
    const NewtonResult res = solver.solve(fn, z_guess, opt);
    if (!res.converged) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "algebraic solve failed at t=%.6g s, scaled residual %.3e", t, res.residual);
        throw AlgebraicSolveFailure(buf);
    }
    return res.y;
}

class TrapezoidalIntegrator {
public:
    explicit TrapezoidalIntegrator(const DaeModel& m) : m_(m) {}

    /// Integrates from (x_ini, z_guess) at opt.t0 to opt.t_end. The initial
    /// algebraic state is made consistent before the first step, and again
    /// after every input event.
    Trajectory run(const Vector& x_ini, const Vector& z_guess, const Vector& u_base, const IntegrateOptions& opt) {
        if (!(opt.dt > 0.0)) throw StepFailure("integrate: dt must be > 0");
        if (opt.t_end < opt.t0) throw StepFailure("integrate: t_end before t0");

        struct Pending {
            double time;
            Eigen::Index index;
            double value;
            std::string input;
        };
        std::vector<Pending> pending;
        for (const auto& e : opt.events)
            pending.push_back({e.time, static_cast<Eigen::Index>(m_.input_index(e.input)), e.value, e.input});
        std::stable_sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) { return a.time < b.time; });

        Trajectory traj;
        traj.columns = trajectory_columns(m_);
        Vector base = u_base;
        std::size_t next_event = 0;
        auto apply_events_at = [&](double t) {
            bool any = false;
            while (next_event < pending.size() && pending[next_event].time <= t + 1e-12) {
                const auto& e = pending[next_event++];
                base[e.index] = e.value;
                char buf[64];
                std::snprintf(buf, sizeof buf, " = %.10g", e.value);
                traj.events.push_back({t, e.input + buf});
                any = true;
            }
            return any;
        };
        auto inputs_at = [&](double t) {
            Vector u = base;
            if (opt.input_modifier) opt.input_modifier(t, u);
            return u;
        };

        double t = opt.t0;
        apply_events_at(t);
        Vector x = x_ini;
        Vector u = inputs_at(t);
        Vector z = solve_algebraic(m_, t, x, z_guess, u, opt.tolerance);
        Vector f, g;
        m_.residual(t, x, z, u, f, g);

        std::size_t step_count = 0;
        auto record = [&](double tt, bool force) {
            if (opt.observer) opt.observer(tt, x, z, u);
            if (opt.record_every == 0) return;
            if (!force && step_count % opt.record_every != 0) return;
            std::vector<double> row;
            row.reserve(static_cast<std::size_t>(x.size() + z.size() + u.size()));
            row.insert(row.end(), x.data(), x.data() + x.size());
            row.insert(row.end(), z.data(), z.data() + z.size());
            row.insert(row.end(), u.data(), u.data() + u.size());
            traj.t.push_back(tt);
            traj.rows.push_back(std::move(row));
        };
        record(t, true);

        const double eps_t = 1e-9 * opt.dt;
        while (t < opt.t_end - eps_t) {
            double h = std::min(opt.dt, opt.t_end - t);
            if (next_event < pending.size() && pending[next_event].time < t + h - eps_t)
                h = std::max(pending[next_event].time - t, 0.0);
            if (h > eps_t) {
                advance(t, h, x, z, u, f, inputs_at, opt, 0);
                t += h;
                ++step_count;
            }
            if (apply_events_at(t)) {
                u = inputs_at(t);
                z = solve_algebraic(m_, t, x, z, u, opt.tolerance);
                m_.residual(t, x, z, u, f, g);
                record(t, true);
            } else if (h > eps_t) {
                record(t, t >= opt.t_end - eps_t);
            }
        }
        return traj;
    }

private:
    template <class InputsAt>
    void advance(double t, double h, Vector& x, Vector& z, Vector& u, Vector& f, const InputsAt& inputs_at,
                 const IntegrateOptions& opt, int depth) {
        const Eigen::Index nx = x.size();
        const Eigen::Index nz = z.size();
        const Vector u1 = inputs_at(t + h);
        const Vector x0 = x;
        const Vector f0 = f;
        SystemFn fn = [&](const Vector& y, Vector& r) {
            Vector f1, g1;
            m_.residual(t + h, y.head(nx), y.tail(nz), u1, f1, g1);
            r.resize(nx + nz);
            r.head(nx) = y.head(nx) - x0 - 0.5 * h * (f0 + f1);
            r.tail(nz) = g1;
            return true;
        };
        if (!solver_ || h != last_h_) {
            Vector ys(nx + nz), rs(nx + nz);
            ys << m_.x_scale(), m_.z_scale();
            rs << m_.x_scale(), m_.g_base();
            solver_.emplace(ys, rs);
            last_h_ = h;
        }
        // Predictor: explicit Euler on x, previous z.
        Vector y(nx + nz);
        y << x0 + h * f0, z;
        NewtonOptions nopt;
        nopt.tolerance = opt.tolerance;
        nopt.max_iterations = 20;
        nopt.reuse_jacobian = true;
        NewtonResult res = solver_->solve(fn, y, nopt);
        if (!res.converged) {
            solver_->invalidate();
            y << x0, z;
            res = solver_->solve(fn, y, nopt);
        }
        if (!res.converged) {
            if (depth >= opt.max_halvings) {
                char buf[128];
                std::snprintf(buf, sizeof buf, "trapezoidal step failed at t=%.9g s (h=%.3g), scaled residual %.3e", t, h,
                              res.residual);
                throw StepFailure(buf);
            }
            advance(t, 0.5 * h, x, z, u, f, inputs_at, opt, depth + 1);
            advance(t + 0.5 * h, 0.5 * h, x, z, u, f, inputs_at, opt, depth + 1);
            return;
        }
        x = res.y.head(nx);
        z = res.y.tail(nz);
        u = u1;
        Vector g;
        m_.residual(t + h, x, z, u, f, g);
    }

    const DaeModel& m_;
    std::optional<NewtonSolver> solver_;
    double last_h_ = 0.0;
};

inline Trajectory integrate(const DaeModel& m, const Vector& x_ini, const Vector& z_guess, const Vector& u_base,
                            const IntegrateOptions& opt) {
    TrapezoidalIntegrator integ(m);
    return integ.run(x_ini, z_guess, u_base, opt);
}

inline Trajectory integrate(const DaeModel& m, const OperatingPoint& start, IntegrateOptions opt) {
    opt.t0 = start.t;
    return integrate(m, start.x, start.z, start.u, opt);
}

} // namespace thyrsim::dae
