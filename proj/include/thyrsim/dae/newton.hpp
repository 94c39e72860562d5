#pragma once

// Damped Newton iteration on a scaled square system with a forward-difference
// Jacobian. The factorised Jacobian can be kept between calls (simplified
// Newton) and is refreshed when contraction stalls.

#include "thyrsim/dae/model.hpp"
#include "thyrsim/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <optional>

namespace thyrsim::dae {

/// Residual callback. Returns false (or throws thyrsim::Error) when the
/// point is outside the model's domain.
using SystemFn = std::function<bool(const Vector& y, Vector& r)>;

struct NewtonOptions {
    double tolerance = 1e-10;  ///< on max |r_i| / r_scale_i
    int max_iterations = 50;
    double fd_step = 1e-7;     ///< relative forward-difference step
    int max_backtracks = 12;
    bool reuse_jacobian = false;
};

struct NewtonResult {
    Vector y;
    double residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    int jacobian_updates = 0;
    bool converged = false;
};

class NewtonSolver {
public:
    NewtonSolver(Vector y_scale, Vector r_scale) : y_scale_(std::move(y_scale)), r_scale_(std::move(r_scale)) {}

    void invalidate() { lu_.reset(); }

    /// Condition-number estimate (1-norm ratio) of the last scaled Jacobian.
    [[nodiscard]] double last_rcond() const { return lu_ ? lu_->rcond() : 0.0; }

    NewtonResult solve(const SystemFn& fn, Vector y, const NewtonOptions& opt = {}) {
        NewtonResult res;
        Vector r;
        if (!eval(fn, y, r)) {
            res.y = y;
            return res;
        }
        double norm = scaled_norm(r);
        double prev_norm = norm;
        bool fresh = false;
        if (!opt.reuse_jacobian || !lu_) {
            if (!update_jacobian(fn, y, r, opt)) {
                res.y = y;
                return res;
            }
            fresh = true;
            ++res.jacobian_updates;
        }
        for (int it = 0; it < opt.max_iterations; ++it) {
            if (norm <= opt.tolerance) {
                res.converged = true;
                break;
            }
            res.iterations = it + 1;
            const Vector rs = r.cwiseQuotient(r_scale_);
            const Vector dys = lu_->solve(-rs);
            if (!dys.allFinite()) {
                if (fresh) break;
                if (!update_jacobian(fn, y, r, opt)) break;
                fresh = true;
                ++res.jacobian_updates;
                continue;
            }
            const Vector dy = dys.cwiseProduct(y_scale_);
            double lambda = 1.0;
            bool accepted = false;
            Vector y_try, r_try;
            double n_try = 0.0;
            for (int bt = 0; bt <= opt.max_backtracks; ++bt) {
                y_try = y + lambda * dy;
                if (eval(fn, y_try, r_try)) {
                    n_try = scaled_norm(r_try);
                    if (n_try < norm || n_try <= opt.tolerance) {
                        accepted = true;
                        break;
                    }
                }
                if (!fresh) break;  // stale Jacobian: refresh before line search
                lambda *= 0.5;
            }
            if (!accepted) {
                if (fresh) break;
                if (!update_jacobian(fn, y, r, opt)) break;
                fresh = true;
                ++res.jacobian_updates;
                continue;
            }
            y = std::move(y_try);
            r = std::move(r_try);
            prev_norm = norm;
            norm = n_try;
            fresh = false;
            if (norm > 0.5 * prev_norm && norm > opt.tolerance) {
                if (!update_jacobian(fn, y, r, opt)) break;
                fresh = true;
                ++res.jacobian_updates;
            }
        }
        if (norm <= opt.tolerance) res.converged = true;
        res.y = std::move(y);
        res.residual = norm;
        return res;
    }

private:
    [[nodiscard]] double scaled_norm(const Vector& r) const {
        return r.size() ? r.cwiseQuotient(r_scale_).cwiseAbs().maxCoeff() : 0.0;
    }

    static bool eval(const SystemFn& fn, const Vector& y, Vector& r) {
        try {
            return fn(y, r) && r.allFinite();
        } catch (const Error&) {
            return false;
        }
    }

    bool update_jacobian(const SystemFn& fn, const Vector& y, const Vector& r, const NewtonOptions& opt) {
        const Eigen::Index n = y.size();
        Matrix jac(n, n);
        Vector yp = y, rp;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double h = opt.fd_step * std::max(std::abs(y[j]), y_scale_[j]);
            yp[j] = y[j] + h;
            bool ok = eval(fn, yp, rp);
            double step = h;
            if (!ok) {
                yp[j] = y[j] - h;
                ok = eval(fn, yp, rp);
                step = -h;
            }
            yp[j] = y[j];
            if (!ok) return false;
            // scaled column: d(r/r_scale) / d(y/y_scale)
            jac.col(j) = (rp - r).cwiseQuotient(r_scale_) * (y_scale_[j] / step);
        }
        lu_.emplace(jac);
        return true;
    }

    Vector y_scale_;
    Vector r_scale_;
    std::optional<Eigen::PartialPivLU<Matrix>> lu_;
};

} // namespace thyrsim::dae
