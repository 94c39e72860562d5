#pragma once

// Semi-explicit DAE  dx/dt = f(x, u, z),  0 = g(x, u, z)  assembled from
// fragments. Each fragment owns a contiguous block of states, algebraic
// variables and inputs, and may read variables owned by other fragments
// through named ports resolved at composition time.

#include "thyrsim/errors.hpp"

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace thyrsim::dae {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// A registered variable. `scale` is the nominal magnitude used to normalise
/// both the variable and its residual in norm tests.
struct VarSpec {
    std::string name;
    std::string unit;
    double value = 0.0;
    double scale = 1.0;
};

struct PortSpec {
    std::string name;
    std::string unit;
};

inline constexpr std::size_t kMaxPorts = 24;

/// Read-only view handed to a fragment residual.
struct LocalView {
    std::span<const double> x;
    std::span<const double> z;
    std::span<const double> u;
    std::span<const double> port;
    double t = 0.0;
};

using Residual = std::function<void(const LocalView&, std::span<double> f, std::span<double> g)>;

/// A composable model piece. `residual` must write exactly states.size()
/// derivatives into f and algebraics.size() constraint residuals into g, and
/// must be deterministic and free of side effects.
struct Fragment {
    std::string name;
    std::vector<VarSpec> states;
    std::vector<VarSpec> algebraics;
    std::vector<VarSpec> inputs;
    std::vector<PortSpec> ports;
    /// Optional per-equation bases; empty means "use the variable scale"
    /// (times `rate_base` for derivatives).
    std::vector<double> f_base;
    std::vector<double> g_base;
    Residual residual;
};

/// Wires fragment port "frag.port" to a variable "frag.var" or a node name.
struct Connection {
    std::string port;
    std::string target;
};

/// Algebraic node potential with a KCL residual sum(sign_k * current_k) = 0.
struct Node {
    std::string name;
    std::string unit;
    double value = 0.0;
    double scale = 1.0;
    std::string current_unit = "A";
    double current_scale = 1.0;
    std::vector<std::pair<std::string, double>> currents;
};

enum class VarKind { State, Algebraic, Input };

struct VarRef {
    VarKind kind = VarKind::State;
    std::size_t index = 0;
};

struct VarInfo {
    std::string name;
    std::string unit;
    double scale = 1.0;
};

/// Time base used to normalise derivative residuals (1 / nominal angular frequency).
inline constexpr double kRateBase = 314.1592653589793;

class DaeModel {
public:
    [[nodiscard]] std::size_t nx() const { return states_.size(); }
    [[nodiscard]] std::size_t nz() const { return algebraics_.size(); }
    [[nodiscard]] std::size_t nu() const { return inputs_.size(); }

    [[nodiscard]] const std::vector<VarInfo>& states() const { return states_; }
    [[nodiscard]] const std::vector<VarInfo>& algebraics() const { return algebraics_; }
    [[nodiscard]] const std::vector<VarInfo>& inputs() const { return inputs_; }

    [[nodiscard]] const Vector& x0() const { return x0_; }
    [[nodiscard]] const Vector& z0() const { return z0_; }
    [[nodiscard]] const Vector& u0() const { return u0_; }
    Vector& x0() { return x0_; }
    Vector& z0() { return z0_; }
    Vector& u0() { return u0_; }

    [[nodiscard]] const Vector& f_base() const { return f_base_; }
    [[nodiscard]] const Vector& g_base() const { return g_base_; }

    [[nodiscard]] Vector x_scale() const { return scales(states_); }
    [[nodiscard]] Vector z_scale() const { return scales(algebraics_); }
    [[nodiscard]] Vector u_scale() const { return scales(inputs_); }

    [[nodiscard]] std::optional<VarRef> find(const std::string& name) const {
        auto it = lookup_.find(name);
        if (it == lookup_.end()) return std::nullopt;
        return it->second;
    }

    [[nodiscard]] VarRef ref(const std::string& name) const {
        auto r = find(name);
        if (!r) throw CompositionError("unknown variable '" + name + "'");
        return *r;
    }

    [[nodiscard]] std::size_t state_index(const std::string& name) const { return index_of(name, VarKind::State); }
    [[nodiscard]] std::size_t algebraic_index(const std::string& name) const { return index_of(name, VarKind::Algebraic); }
    [[nodiscard]] std::size_t input_index(const std::string& name) const { return index_of(name, VarKind::Input); }

    [[nodiscard]] static double value(const VarRef& r, const Vector& x, const Vector& z, const Vector& u) {
        switch (r.kind) {
        case VarKind::State: return x[static_cast<Eigen::Index>(r.index)];
        case VarKind::Algebraic: return z[static_cast<Eigen::Index>(r.index)];
        case VarKind::Input: return u[static_cast<Eigen::Index>(r.index)];
        }
        return 0.0;
    }

    [[nodiscard]] double value(const std::string& name, const Vector& x, const Vector& z, const Vector& u) const {
        return value(ref(name), x, z, u);
    }

    /// Evaluates f and g. Safe to call concurrently.
    void residual(double t, const Vector& x, const Vector& z, const Vector& u, Vector& f, Vector& g) const {
        f.resize(static_cast<Eigen::Index>(nx()));
        g.resize(static_cast<Eigen::Index>(nz()));
        for (const auto& blk : blocks_) {
            std::array<double, kMaxPorts> port{};
            for (std::size_t k = 0; k < blk.ports.size(); ++k) port[k] = value(blk.ports[k], x, z, u);
            LocalView view{
                std::span<const double>(x.data() + blk.x_off, blk.nx),
                std::span<const double>(z.data() + blk.z_off, blk.nz),
                std::span<const double>(u.data() + blk.u_off, blk.nu),
                std::span<const double>(port.data(), blk.ports.size()),
                t};
            blk.residual(view, std::span<double>(f.data() + blk.x_off, blk.nx),
                         std::span<double>(g.data() + blk.z_off, blk.nz));
        }
        for (const auto& node : nodes_) {
            double sum = 0.0;
            for (const auto& [r, sign] : node.currents) sum += sign * value(r, x, z, u);
            g[static_cast<Eigen::Index>(node.g_index)] = sum;
        }
    }

    /// Scaled infinity norms of f and g.
    [[nodiscard]] std::pair<double, double> residual_norms(double t, const Vector& x, const Vector& z, const Vector& u) const {
        Vector f, g;
        residual(t, x, z, u, f, g);
        const double nf = nx() ? f.cwiseQuotient(f_base_).cwiseAbs().maxCoeff() : 0.0;
        const double ng = nz() ? g.cwiseQuotient(g_base_).cwiseAbs().maxCoeff() : 0.0;
        return {nf, ng};
    }

    [[nodiscard]] std::size_t fragment_count() const { return blocks_.size(); }

private:
    friend DaeModel compose(const std::vector<Fragment>&, const std::vector<Connection>&, const std::vector<Node>&);

    struct Block {
        std::string name;
        std::size_t x_off = 0, nx = 0, z_off = 0, nz = 0, u_off = 0, nu = 0;
        std::vector<VarRef> ports;
        Residual residual;
    };
    struct NodeBlock {
        std::size_t g_index = 0;
        std::vector<std::pair<VarRef, double>> currents;
    };

    [[nodiscard]] std::size_t index_of(const std::string& name, VarKind kind) const {
        const auto r = ref(name);
        if (r.kind != kind) throw CompositionError("variable '" + name + "' has a different kind");
        return r.index;
    }

    static Vector scales(const std::vector<VarInfo>& v) {
        Vector s(static_cast<Eigen::Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) s[static_cast<Eigen::Index>(i)] = v[i].scale;
        return s;
    }

    std::vector<VarInfo> states_, algebraics_, inputs_;
    Vector x0_, z0_, u0_, f_base_, g_base_;
    std::map<std::string, VarRef> lookup_;
    std::map<std::string, std::string> units_;
    std::vector<Block> blocks_;
    std::vector<NodeBlock> nodes_;
};

/// Builds a single DAE from fragments. Variables are published as
/// "fragment.variable"; nodes as their bare name.
inline DaeModel compose(const std::vector<Fragment>& fragments, const std::vector<Connection>& connections = {},
                        const std::vector<Node>& nodes = {}) {
    if (fragments.empty()) throw CompositionError("compose: empty fragment list");

    DaeModel m;
    std::vector<double> x0, z0, u0, fb, gb;

    auto publish = [&](const std::string& full, const VarSpec& v, VarKind kind, std::size_t idx) {
        if (m.lookup_.count(full)) throw CompositionError("compose: duplicate variable name '" + full + "'");
        m.lookup_[full] = {kind, idx};
        m.units_[full] = v.unit;
        if (!(v.scale > 0.0)) throw CompositionError("compose: non-positive scale for '" + full + "'");
    };

    std::map<std::string, bool> fragment_names;
    for (const auto& fr : fragments) {
        if (fragment_names.count(fr.name)) throw CompositionError("compose: duplicate fragment name '" + fr.name + "'");
        fragment_names[fr.name] = true;
        if (!fr.residual) throw CompositionError("compose: fragment '" + fr.name + "' has no residual");
        if (fr.ports.size() > kMaxPorts) throw CompositionError("compose: too many ports on '" + fr.name + "'");
        if (!fr.f_base.empty() && fr.f_base.size() != fr.states.size())
            throw CompositionError("compose: f_base size mismatch in '" + fr.name + "'");
        if (!fr.g_base.empty() && fr.g_base.size() != fr.algebraics.size())
            throw CompositionError("compose: g_base size mismatch in '" + fr.name + "'");

        DaeModel::Block blk;
        blk.name = fr.name;
        blk.x_off = x0.size();
        blk.z_off = z0.size();
        blk.u_off = u0.size();
        blk.nx = fr.states.size();
        blk.nz = fr.algebraics.size();
        blk.nu = fr.inputs.size();
        blk.residual = fr.residual;
        for (std::size_t i = 0; i < fr.states.size(); ++i) {
            const auto& v = fr.states[i];
            const std::string full = fr.name + "." + v.name;
            publish(full, v, VarKind::State, x0.size());
            m.states_.push_back({full, v.unit, v.scale});
            x0.push_back(v.value);
            fb.push_back(fr.f_base.empty() ? v.scale * kRateBase : fr.f_base[i]);
        }
        for (std::size_t i = 0; i < fr.algebraics.size(); ++i) {
            const auto& v = fr.algebraics[i];
            const std::string full = fr.name + "." + v.name;
            publish(full, v, VarKind::Algebraic, z0.size());
            m.algebraics_.push_back({full, v.unit, v.scale});
            z0.push_back(v.value);
            gb.push_back(fr.g_base.empty() ? v.scale : fr.g_base[i]);
        }
        for (const auto& v : fr.inputs) {
            const std::string full = fr.name + "." + v.name;
            publish(full, v, VarKind::Input, u0.size());
            m.inputs_.push_back({full, v.unit, v.scale});
            u0.push_back(v.value);
        }
        m.blocks_.push_back(std::move(blk));
    }

    for (const auto& nd : nodes) {
        VarSpec v{nd.name, nd.unit, nd.value, nd.scale};
        publish(nd.name, v, VarKind::Algebraic, z0.size());
        m.algebraics_.push_back({nd.name, nd.unit, nd.scale});
        z0.push_back(nd.value);
        gb.push_back(nd.current_scale);
    }

    std::map<std::string, std::string> wiring;
    for (const auto& c : connections) {
        if (wiring.count(c.port)) throw CompositionError("compose: port '" + c.port + "' connected twice");
        wiring[c.port] = c.target;
    }

    for (std::size_t b = 0; b < fragments.size(); ++b) {
        const auto& fr = fragments[b];
        for (const auto& p : fr.ports) {
            const std::string key = fr.name + "." + p.name;
            auto w = wiring.find(key);
            if (w == wiring.end()) throw DanglingConnection("compose: port '" + key + "' is not connected");
            auto target = m.lookup_.find(w->second);
            if (target == m.lookup_.end())
                throw DanglingConnection("compose: port '" + key + "' targets unknown variable '" + w->second + "'");
            if (m.units_[w->second] != p.unit)
                throw UnitMismatch("compose: port '" + key + "' expects [" + p.unit + "] but '" + w->second + "' is [" +
                                   m.units_[w->second] + "]");
            m.blocks_[b].ports.push_back(target->second);
            wiring.erase(w);
        }
    }
    if (!wiring.empty()) throw DanglingConnection("compose: connection from unknown port '" + wiring.begin()->first + "'");

    std::size_t node_g = z0.size() - nodes.size();
    for (const auto& nd : nodes) {
        DaeModel::NodeBlock nb;
        nb.g_index = node_g++;
        for (const auto& [name, sign] : nd.currents) {
            auto target = m.lookup_.find(name);
            if (target == m.lookup_.end())
                throw DanglingConnection("compose: node '" + nd.name + "' references unknown current '" + name + "'");
            if (m.units_[name] != nd.current_unit)
                throw UnitMismatch("compose: node '" + nd.name + "' current '" + name + "' has unit [" + m.units_[name] + "]");
            nb.currents.emplace_back(target->second, sign);
        }
        m.nodes_.push_back(std::move(nb));
    }

    auto to_vec = [](const std::vector<double>& v) {
        return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    m.x0_ = to_vec(x0);
    m.z0_ = to_vec(z0);
    m.u0_ = to_vec(u0);
    m.f_base_ = to_vec(fb);
    m.g_base_ = to_vec(gb);
    return m;
}

} // namespace thyrsim::dae
