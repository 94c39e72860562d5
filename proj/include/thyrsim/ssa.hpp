#pragma once

// Small-signal analysis: numerical linearisation of the DAE, elimination of
// the algebraic variables, modal decomposition, participation factors and
// parameter sweeps with eigenvector-based mode tracking.

#include "thyrsim/dae/equilibrium.hpp"
#include "thyrsim/dae/integrate.hpp"
#include "thyrsim/dae/model.hpp"
#include "thyrsim/errors.hpp"
#include "thyrsim/frames.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace thyrsim::ssa {

using cplx = std::complex<double>;
using dae::Matrix;
using dae::Vector;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

struct LinearModel {
    Matrix a_xx, a_xz, a_zx, a_zz, b_xu, b_zu;
    Matrix a;  ///< reduced state matrix
    Matrix b;  ///< reduced input matrix
    std::vector<std::string> states, algebraics, inputs;
    Vector x_scale;
    dae::OperatingPoint point;
    double azz_rcond = 0.0;  ///< reciprocal condition estimate of A_zz

    [[nodiscard]] Eigen::Index nx() const { return a.rows(); }

    [[nodiscard]] Eigen::Index input_index(const std::string& name) const {
        for (std::size_t i = 0; i < inputs.size(); ++i)
            if (inputs[i] == name) return static_cast<Eigen::Index>(i);
        throw CompositionError("linear model: unknown input '" + name + "'");
    }

    /// Output map of a state or algebraic variable: y = c dx + d du.
    [[nodiscard]] std::pair<Eigen::RowVectorXd, Eigen::RowVectorXd> output(const std::string& name) const {
        for (std::size_t i = 0; i < states.size(); ++i) {
            if (states[i] != name) continue;
            Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(a.rows());
            c[static_cast<Eigen::Index>(i)] = 1.0;
            return {c, Eigen::RowVectorXd::Zero(b.cols())};
        }
        for (std::size_t i = 0; i < algebraics.size(); ++i) {
            if (algebraics[i] != name) continue;
            const auto lu = a_zz.partialPivLu();
            // dz = -A_zz^-1 (A_zx dx + B_zu du)
            const Matrix dz_dx = -lu.solve(a_zx);
            const Matrix dz_du = -lu.solve(b_zu);
            return {dz_dx.row(static_cast<Eigen::Index>(i)), dz_du.row(static_cast<Eigen::Index>(i))};
        }
        throw CompositionError("linear model: unknown output '" + name + "'");
    }

    /// G(j omega) for a complex input direction (input name, coefficient) list:
    /// y = (c (j omega I - A)^-1 B + d) du.
    [[nodiscard]] std::vector<cplx> frequency_response(const std::vector<std::string>& outputs,
                                                       const std::vector<std::pair<std::string, cplx>>& direction,
                                                       double omega) const {
        CVector du = CVector::Zero(b.cols());
        for (const auto& [name, c] : direction) du[input_index(name)] += c;
        const Eigen::Index n = a.rows();
        CMatrix m = CMatrix::Identity(n, n) * cplx(0.0, omega) - a.cast<cplx>();
        const CVector dx = n ? CVector(m.partialPivLu().solve(b.cast<cplx>() * du)) : CVector(0);
        std::vector<cplx> out;
        for (const auto& name : outputs) {
            const auto [c, d] = output(name);
            cplx y = (d.cast<cplx>() * du)(0);
            if (n) y += (c.cast<cplx>() * dx)(0);
            out.push_back(y);
        }
        return out;
    }
};

struct LinearizeOptions {
    double equilibrium_tolerance = 1e-6;  ///< scaled residual above which NonEquilibrium is raised
    bool log_conditioning = false;
};

/// Central-difference Jacobian blocks at an equilibrium and the reduced
/// state-space form A = A_xx - A_xz A_zz^-1 A_zx, B = B_xu - A_xz A_zz^-1 B_zu.
inline LinearModel linearize(const dae::DaeModel& m, const dae::OperatingPoint& op, const LinearizeOptions& opt = {}) {
    const auto [nf, ng] = m.residual_norms(op.t, op.x, op.z, op.u);
    if (nf > opt.equilibrium_tolerance || ng > opt.equilibrium_tolerance) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "linearize: point is not an equilibrium (|f|=%.3e, |g|=%.3e scaled)", nf, ng);
        throw NonEquilibrium(buf);
    }
    const Eigen::Index nx = op.x.size(), nz = op.z.size(), nu = op.u.size();
    LinearModel lm;
    lm.a_xx.resize(nx, nx);
    lm.a_xz.resize(nx, nz);
    lm.a_zx.resize(nz, nx);
    lm.a_zz.resize(nz, nz);
    lm.b_xu.resize(nx, nu);
    lm.b_zu.resize(nz, nu);

    const Vector xs = m.x_scale(), zs = m.z_scale(), us = m.u_scale();
    auto step = [](double v, double scale) { return std::max(1e-6 * std::abs(v), 1e-9 * scale); };
    Vector fp, gp, fm, gm;

    for (Eigen::Index j = 0; j < nx; ++j) {
        Vector x = op.x;
        const double h = step(op.x[j], xs[j]);
        x[j] = op.x[j] + h;
        m.residual(op.t, x, op.z, op.u, fp, gp);
        x[j] = op.x[j] - h;
        m.residual(op.t, x, op.z, op.u, fm, gm);
        lm.a_xx.col(j) = (fp - fm) / (2.0 * h);
        lm.a_zx.col(j) = (gp - gm) / (2.0 * h);
    }
    for (Eigen::Index j = 0; j < nz; ++j) {
        Vector z = op.z;
        const double h = step(op.z[j], zs[j]);
        z[j] = op.z[j] + h;
        m.residual(op.t, op.x, z, op.u, fp, gp);
        z[j] = op.z[j] - h;
        m.residual(op.t, op.x, z, op.u, fm, gm);
        lm.a_xz.col(j) = (fp - fm) / (2.0 * h);
        lm.a_zz.col(j) = (gp - gm) / (2.0 * h);
    }
    for (Eigen::Index j = 0; j < nu; ++j) {
        Vector u = op.u;
        const double h = step(op.u[j], us[j]);
        u[j] = op.u[j] + h;
        m.residual(op.t, op.x, op.z, u, fp, gp);
        u[j] = op.u[j] - h;
        m.residual(op.t, op.x, op.z, u, fm, gm);
        lm.b_xu.col(j) = (fp - fm) / (2.0 * h);
        lm.b_zu.col(j) = (gp - gm) / (2.0 * h);
    }

    if (nz > 0) {
        // conditioning on the scaled block (rows by g base, columns by z scale)
        const Matrix scaled = m.g_base().cwiseInverse().asDiagonal() * lm.a_zz * zs.asDiagonal();
        const Eigen::JacobiSVD<Matrix> svd(scaled);
        const auto& sv = svd.singularValues();
        lm.azz_rcond = sv[0] > 0.0 ? sv[sv.size() - 1] / sv[0] : 0.0;
        if (opt.log_conditioning) std::clog << "linearize: cond(A_zz, scaled) = " << 1.0 / lm.azz_rcond << '\n';
        if (!(lm.azz_rcond > 1e-13)) throw SingularAzz("linearize: A_zz is numerically singular (index > 1 at this point)");
        const auto lu = lm.a_zz.fullPivLu();
        lm.a = lm.a_xx - lm.a_xz * lu.solve(lm.a_zx);
        lm.b = lm.b_xu - lm.a_xz * lu.solve(lm.b_zu);
    } else {
        lm.azz_rcond = 1.0;
        lm.a = lm.a_xx;
        lm.b = lm.b_xu;
    }
    for (const auto& v : m.states()) lm.states.push_back(v.name);
    for (const auto& v : m.algebraics()) lm.algebraics.push_back(v.name);
    for (const auto& v : m.inputs()) lm.inputs.push_back(v.name);
    lm.x_scale = xs;
    lm.point = op;
    return lm;
}

// ------------------------------------------------------------------ modes

inline double damping_ratio(cplx lambda) {
    const double mag = std::abs(lambda);
    return mag > 0.0 ? -lambda.real() / mag : 0.0;
}
inline double damped_frequency_hz(cplx lambda) { return std::abs(lambda.imag()) / (2.0 * kPi); }

struct Participation {
    std::string state;
    double factor = 0.0;
};

struct ModeReport {
    cplx lambda{};
    double zeta = 0.0;
    double f_n_hz = 0.0;
    std::vector<Participation> participations;  ///< registry order
    CVector shape;                              ///< right eigenvector in scaled coordinates, unit norm
    CVector right;                              ///< right eigenvector in model coordinates

    [[nodiscard]] const Participation& dominant_state() const {
        return *std::max_element(participations.begin(), participations.end(),
                                 [](const Participation& a, const Participation& b) { return a.factor < b.factor; });
    }
};

inline ModeReport mode_from_eigenvalue(cplx lambda) { return {lambda, damping_ratio(lambda), damped_frequency_hz(lambda), {}, {}, {}}; }

/// Eigen-decomposition of A with participation factors |v_ki w_ik|,
/// normalised to sum to one per mode. Complex pairs are reported once (Im >= 0).
inline std::vector<ModeReport> modes(const Matrix& a, const std::vector<std::string>& labels, const Vector& scale = {}) {
    const Eigen::Index n = a.rows();
    std::vector<ModeReport> out;
    if (n == 0) return out;
    if (!a.allFinite()) throw EigenFailure("modes: state matrix has non-finite entries");
    Eigen::EigenSolver<Matrix> es(a, true);
    if (es.info() != Eigen::Success) throw EigenFailure("modes: eigen-decomposition failed");
    const CVector lam = es.eigenvalues();
    const CMatrix v = es.eigenvectors();
    const Eigen::FullPivLU<CMatrix> lu(v);
    if (!lu.isInvertible()) throw EigenFailure("modes: defective eigenvector matrix");
    const CMatrix w = lu.inverse();  // rows are left eigenvectors
    const Vector s = scale.size() == n ? scale : Vector::Ones(n);
    const double tol = 1e-9 * std::max(1.0, lam.cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < n; ++i) {
        if (lam[i].imag() < -tol) continue;
        ModeReport r = mode_from_eigenvalue(lam[i]);
        if (std::abs(lam[i].imag()) <= tol) r.lambda = cplx(lam[i].real(), 0.0), r.f_n_hz = 0.0, r.zeta = damping_ratio(r.lambda);
        double sum = 0.0;
        std::vector<double> p(static_cast<std::size_t>(n));
        for (Eigen::Index k = 0; k < n; ++k) {
            p[static_cast<std::size_t>(k)] = std::abs(v(k, i) * w(i, k));
            sum += p[static_cast<std::size_t>(k)];
        }
        for (Eigen::Index k = 0; k < n; ++k)
            r.participations.push_back({k < static_cast<Eigen::Index>(labels.size()) ? labels[static_cast<std::size_t>(k)] : std::to_string(k),
                                        sum > 0.0 ? p[static_cast<std::size_t>(k)] / sum : 0.0});
        r.right = v.col(i);
        r.shape = v.col(i).cwiseQuotient(s.cast<cplx>());
        const double nrm = r.shape.norm();
        if (nrm > 0.0) r.shape /= nrm;
        out.push_back(std::move(r));
    }
    std::stable_sort(out.begin(), out.end(), [](const ModeReport& a, const ModeReport& b) {
        return a.lambda.real() > b.lambda.real();
    });
    return out;
}

inline std::vector<ModeReport> modes(const LinearModel& lm) { return modes(lm.a, lm.states, lm.x_scale); }

struct Verdict {
    bool stable = true;
    double max_real = -std::numeric_limits<double>::infinity();
    double margin = std::numeric_limits<double>::infinity();  ///< -max Re(lambda)
    bool boundary = false;                                     ///< max Re(lambda) == 0
};

/// Stable only if every eigenvalue has a strictly negative real part.
inline Verdict stability_verdict(const std::vector<ModeReport>& ms) {
    Verdict v;
    for (const auto& m : ms) v.max_real = std::max(v.max_real, m.lambda.real());
    if (ms.empty()) v.max_real = 0.0, v.margin = 0.0;
    v.stable = v.max_real < 0.0;
    v.boundary = v.max_real == 0.0;
    v.margin = -v.max_real;
    if (v.margin == 0.0) v.margin = 0.0;  // no negative zero
    return v;
}

/// Rightmost oscillatory mode, or the rightmost mode if none oscillates.
inline const ModeReport& dominant_mode(const std::vector<ModeReport>& ms) {
    if (ms.empty()) throw EigenFailure("dominant_mode: no modes");
    for (const auto& m : ms)
        if (m.lambda.imag() > 0.0) return m;
    return ms.front();
}

// ------------------------------------------------------------------ sweep

struct SweepPoint {
    double value = 0.0;
    bool ok = false;
    std::string error;
    std::vector<ModeReport> modes;
    Verdict verdict;
};

struct SweepResult {
    std::vector<SweepPoint> points;
    /// tracks[k][p]: eigenvalue of tracked mode k at point p (nullopt when absent).
    std::vector<std::vector<std::optional<cplx>>> tracks;
    std::optional<double> first_unstable;   ///< first path value with max Re >= 0
    std::optional<double> crossing;         ///< bisection-refined boundary
    std::optional<std::size_t> crossing_track;
};

struct SweepOptions {
    bool refine = true;
    double relative_tolerance = 0.01;
    int max_bisections = 40;
};

using LinearizeAt = std::function<LinearModel(double)>;

/// Greedy assignment of new modes to existing tracks by mode-shape overlap.
inline void extend_tracks(SweepResult& res, const std::vector<ModeReport>& prev, const std::vector<std::size_t>& prev_track,
                          const std::vector<ModeReport>& cur, std::vector<std::size_t>& cur_track, std::size_t point) {
    cur_track.assign(cur.size(), std::numeric_limits<std::size_t>::max());
    struct Cand {
        double overlap;
        std::size_t i, j;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < prev.size(); ++i)
        for (std::size_t j = 0; j < cur.size(); ++j) {
            if (prev[i].shape.size() != cur[j].shape.size()) continue;
            cands.push_back({std::abs(prev[i].shape.dot(cur[j].shape)), i, j});
        }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.overlap > b.overlap; });
    std::vector<bool> used_prev(prev.size(), false);
    for (const auto& c : cands) {
        if (used_prev[c.i] || cur_track[c.j] != std::numeric_limits<std::size_t>::max()) continue;
        used_prev[c.i] = true;
        cur_track[c.j] = prev_track[c.i];
    }
    for (std::size_t j = 0; j < cur.size(); ++j) {
        if (cur_track[j] == std::numeric_limits<std::size_t>::max()) {
            cur_track[j] = res.tracks.size();
            res.tracks.emplace_back(res.points.size(), std::nullopt);
        }
        res.tracks[cur_track[j]][point] = cur[j].lambda;
    }
}

/// Evaluates the spectrum along `path`. Points whose linearisation fails are
/// kept with ok = false and skipped by tracking. The first stability loss is
/// refined by bisection to `relative_tolerance` of the parameter value.
inline SweepResult parameter_sweep(const LinearizeAt& linearize_at, const std::vector<double>& path,
                                   const SweepOptions& opt = {}) {
    SweepResult res;
    std::vector<ModeReport> prev;
    std::vector<std::size_t> prev_track;
    for (double value : path) {
        SweepPoint pt;
        pt.value = value;
        try {
            pt.modes = modes(linearize_at(value));
            pt.verdict = stability_verdict(pt.modes);
            pt.ok = true;
        } catch (const Error& e) {
            pt.error = e.kind() + ": " + e.what();
        }
        res.points.push_back(pt);
        for (auto& tr : res.tracks) tr.emplace_back(std::nullopt);
        if (!pt.ok) continue;
        std::vector<std::size_t> cur_track;
        extend_tracks(res, prev, prev_track, pt.modes, cur_track, res.points.size() - 1);
        prev = pt.modes;
        prev_track = std::move(cur_track);
    }

    std::optional<std::size_t> last_stable;
    for (std::size_t k = 0; k < res.points.size(); ++k) {
        const auto& pt = res.points[k];
        if (!pt.ok) continue;
        if (!pt.verdict.stable) {
            res.first_unstable = pt.value;
            // the track holding the rightmost eigenvalue at the first unstable point
            double best = -std::numeric_limits<double>::infinity();
            for (std::size_t t = 0; t < res.tracks.size(); ++t)
                if (res.tracks[t][k] && res.tracks[t][k]->real() > best) best = res.tracks[t][k]->real(), res.crossing_track = t;
            if (opt.refine && last_stable) {
                double lo = res.points[*last_stable].value;  // stable
                double hi = pt.value;                        // unstable
                for (int it = 0; it < opt.max_bisections; ++it) {
                    if (std::abs(hi - lo) <= opt.relative_tolerance * std::min(std::abs(hi), std::abs(lo))) break;
                    const double mid = 0.5 * (lo + hi);
                    try {
                        const Verdict v = stability_verdict(modes(linearize_at(mid)));
                        (v.stable ? lo : hi) = mid;
                    } catch (const Error&) {
                        break;
                    }
                }
                res.crossing = 0.5 * (lo + hi);
            }
            break;
        }
        last_stable = k;
    }
    return res;
}

// ------------------------------------------------------- time-domain fit

struct DampedSinusoid {
    double f_n_hz = 0.0;
    double zeta = 0.0;
    cplx lambda{};
};

/// Order-2 Prony fit x[k] = c1 x[k-1] + c2 x[k-2] on uniformly sampled data.
inline DampedSinusoid fit_damped_sinusoid(const std::vector<double>& x, double dt) {
    if (x.size() < 8) throw NoConvergence("fit_damped_sinusoid: need at least 8 samples");
    const Eigen::Index n = static_cast<Eigen::Index>(x.size()) - 2;
    Matrix m(n, 2);
    Vector rhs(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        m(k, 0) = x[static_cast<std::size_t>(k + 1)];
        m(k, 1) = x[static_cast<std::size_t>(k)];
        rhs[k] = x[static_cast<std::size_t>(k + 2)];
    }
    const Vector c = m.colPivHouseholderQr().solve(rhs);
    // z^2 - c1 z - c2 = 0
    const cplx disc = std::sqrt(cplx(c[0] * c[0] + 4.0 * c[1], 0.0));
    const cplx z = 0.5 * (c[0] + disc);
    DampedSinusoid out;
    out.lambda = std::log(z) / dt;
    out.f_n_hz = damped_frequency_hz(out.lambda);
    out.zeta = damping_ratio(out.lambda);
    return out;
}

struct ModeValidation {
    ModeReport mode;
    DampedSinusoid fit;
    std::string signal;
};

/// Perturbs the equilibrium along Re(v) of the dominant mode by
/// `relative_size` of the state scales, integrates the nonlinear DAE and fits
/// a damped sinusoid to the deviation of the most participating state.
inline ModeValidation validate_dominant_mode(const dae::DaeModel& m, const LinearModel& lm, double relative_size = 1e-3,
                                             double cycles = 4.0, double dt = 50e-6) {
    const auto ms = modes(lm);
    ModeValidation out;
    out.mode = dominant_mode(ms);
    if (out.mode.lambda.imag() <= 0.0) throw EigenFailure("validate_dominant_mode: no oscillatory mode");
    const CVector& shape = out.mode.shape;
    Eigen::Index k_sig = 0;
    double best = -1.0;
    for (Eigen::Index k = 0; k < shape.size(); ++k)
        if (out.mode.participations[static_cast<std::size_t>(k)].factor > best)
            best = out.mode.participations[static_cast<std::size_t>(k)].factor, k_sig = k;
    out.signal = lm.states[static_cast<std::size_t>(k_sig)];

    // Re(v) in scaled coordinates, rotated so that the signal entry is real
    const cplx ph = shape[k_sig] / std::abs(shape[k_sig]);
    const Vector dir = (shape / ph).real();
    const Vector dx = relative_size * dir.cwiseProduct(lm.x_scale) / dir.cwiseAbs().maxCoeff();

    const double period = 1.0 / out.mode.f_n_hz;
    const double t_end = cycles * period;
    const std::size_t every = std::max<std::size_t>(1, static_cast<std::size_t>(period / 40.0 / dt));
    std::vector<double> dev;
    std::size_t count = 0;
    dae::IntegrateOptions iopt;
    iopt.dt = dt;
    iopt.t0 = lm.point.t;
    iopt.t_end = lm.point.t + t_end;
    iopt.record_every = 0;
    const double x_ref = lm.point.x[k_sig];
    iopt.observer = [&](double, const Vector& x, const Vector&, const Vector&) {
        if (count++ % every == 0) dev.push_back(x[k_sig] - x_ref);
    };
    dae::integrate(m, lm.point.x + dx, lm.point.z, lm.point.u, iopt);
    out.fit = fit_damped_sinusoid(dev, static_cast<double>(every) * dt);
    return out;
}

} // namespace thyrsim::ssa
