#pragma once

#include "thyrsim/dae/model.hpp"
#include "thyrsim/dae/newton.hpp"
#include "thyrsim/errors.hpp"

#include <cstdio>
#include <string>

namespace thyrsim::dae {

struct OperatingPoint {
    Vector x;
    Vector z;
    Vector u;
    double t = 0.0;
};

struct EquilibriumOptions {
    double tolerance = 1e-9;
    int max_iterations = 60;
};

struct EquilibriumReport {
    OperatingPoint point;
    int iterations = 0;
    double residual = 0.0;
};

/// Solves f(x, u, z) = 0, g(x, u, z) = 0 for (x, z) at fixed u.
/// Throws NoConvergence with the best scaled residual reached.
inline EquilibriumReport solve_equilibrium(const DaeModel& m, const OperatingPoint& guess,
                                           const EquilibriumOptions& opt = {}) {
    const Eigen::Index nx = static_cast<Eigen::Index>(m.nx());
    const Eigen::Index nz = static_cast<Eigen::Index>(m.nz());
    Vector y(nx + nz), ys(nx + nz), rs(nx + nz);
    y << guess.x, guess.z;
    ys << m.x_scale(), m.z_scale();
    rs << m.f_base(), m.g_base();

    const Vector u = guess.u;
    const double t = guess.t;
    SystemFn fn = [&](const Vector& v, Vector& r) {
        Vector f, g;
        m.residual(t, v.head(nx), v.tail(nz), u, f, g);
        r.resize(nx + nz);
        r << f, g;
        return true;
    };
    NewtonSolver solver(ys, rs);
    NewtonOptions nopt;
    nopt.tolerance = opt.tolerance;
    nopt.max_iterations = opt.max_iterations;
    const NewtonResult res = solver.solve(fn, y, nopt);
    if (!res.converged) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "solve_equilibrium: no convergence after %d iterations, best scaled residual %.3e",
                      res.iterations, res.residual);
        throw NoConvergence(buf);
    }
    EquilibriumReport rep;
    rep.point = {res.y.head(nx), res.y.tail(nz), u, t};
    rep.iterations = res.iterations;
    rep.residual = res.residual;
    return rep;
}

inline OperatingPoint initial_point(const DaeModel& m) { return {m.x0(), m.z0(), m.u0(), 0.0}; }

} // namespace thyrsim::dae
