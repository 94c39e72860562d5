#pragma once

// Scenario configuration (JSON) and the builders that turn it into DAE
// systems, switching-oracle set-ups and scan runners.

#include "thyrsim/dae/equilibrium.hpp"
#include "thyrsim/dae/integrate.hpp"
#include "thyrsim/dae/model.hpp"
#include "thyrsim/errors.hpp"
#include "thyrsim/network.hpp"
#include "thyrsim/rectifier_emt.hpp"
#include "thyrsim/rectifier_rms.hpp"
#include "thyrsim/rectifier_switching.hpp"
#include "thyrsim/scan.hpp"

#include "json.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace thyrsim::scenario {

using nlohmann::json;

/// ConfigError carrying the dotted path of the offending key.
class KeyError : public ConfigError {
public:
    KeyError(std::string key, const std::string& what) : ConfigError(key + ": " + what), key_(std::move(key)) {}
    [[nodiscard]] const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

// ------------------------------------------------------------ config types

struct SourceConfig {
    double v_peak = 110.0;
    double f = 50.0;
    double l_c = 5e-6;
};

struct RectifierConfig {
    int pulses = 6;
    double pll_kp = 1.0;
    double pll_ki = 100.0;
    double firing_filter_hz = 0.0;  ///< 0 selects half the pulse frequency
    emt::CurrentMode current_mode = emt::CurrentMode::Exact;
    rms::RmsVariant rms_variant = rms::RmsVariant::Extended;
};

struct ElectrolyzerConfig {
    double l_d = 20e-6;
    double r0 = 0.8e-3;
    double r1 = 3e-3;
    double c1 = 10.0;
    double v_rev = 100.0;
    double idc_ref = 10e3;
    std::optional<double> kp;  ///< explicit PI gains override bandwidth_hz
    std::optional<double> ki;
    double bandwidth_hz = 10.0;
    double alpha_min_deg = 5.0;
    double alpha_max_deg = 85.0;
};

struct CurrentSourceConfig {
    double i_dc = 10e3;
    double alpha_deg = 30.0;
};

struct VsmConfig {
    double rating = 1e6;
    double h = 5.0;
    double d = 0.32;
    double t_v = 0.05;
    double k_v = 1.0;
    double l_v = 5e-6;
    double share = 0.5;  ///< fraction of the rectifier's AC power supplied by the VSM
};

struct GridConfig {
    double l_g = 4e-6;
    std::optional<VsmConfig> vsm;
};

struct OracleConfig {
    double dt = 1e-6;
    double event_tolerance = 1e-9;
    double pss_tolerance = 1e-6;
    int max_cycles = 200;
};

struct EventConfig {
    double time = 0.0;
    std::string target;
    double value = 0.0;
};

struct SimulateConfig {
    double t_end = 0.06;
    double dt = 20e-6;
    double record_interval = 1e-4;
    std::vector<std::string> models = {"rms", "emt", "switching"};
    std::vector<EventConfig> events;
};

struct ScanConfig {
    double f_min = 1.0;
    double f_max = 1000.0;
    int points = 30;
    std::vector<double> frequencies;
    double amplitude = 0.01;
    double settle_cycles = 10.0;
    double measure_periods = 10.0;
    double min_measure_cycles = 5.0;
    std::vector<std::string> models = {"rms", "emt", "switching"};
};

struct ModesConfig {
    std::string model = "emt";
};

struct SweepConfig {
    std::string param = "rectifier.pll_kp";
    double from = 1.0;
    double to = 0.01;
    int points = 25;
    std::string spacing = "log";
    bool refine = true;
    std::string model = "emt";
};

struct Scenario {
    std::string name = "scenario";
    std::string study = "simulate";
    SourceConfig source;
    RectifierConfig rectifier;
    std::optional<ElectrolyzerConfig> electrolyzer;
    std::optional<CurrentSourceConfig> current_source;
    std::optional<GridConfig> grid;
    OracleConfig oracle;
    SimulateConfig simulate;
    ScanConfig scan;
    ModesConfig modes;
    SweepConfig sweep;
    std::string output;
};

inline const std::vector<std::string>& study_types() {
    static const std::vector<std::string> t = {"simulate", "scan_dc", "scan_ac", "linearize", "modes", "sweep"};
    return t;
}

// ------------------------------------------------------------- parsing

namespace detail {

/// Strict reader over one JSON object: typed access by key, unknown keys rejected.
class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw KeyError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    [[nodiscard]] std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
    [[nodiscard]] bool has(const std::string& k) const { return j_.contains(k); }

    const json& at(const std::string& k) {
        used_.insert(k);
        return j_.at(k);
    }

    double number(const std::string& k, double def) { return has(k) ? number(k) : def; }
    double number(const std::string& k) {
        if (!has(k)) throw KeyError(key(k), "missing required key");
        const json& v = at(k);
        if (!v.is_number()) throw KeyError(key(k), "expected a number");
        return v.get<double>();
    }
    double positive(const std::string& k, double def) {
        const double v = number(k, def);
        if (!(v > 0.0)) throw KeyError(key(k), "must be > 0");
        return v;
    }
    double non_negative(const std::string& k, double def) {
        const double v = number(k, def);
        if (v < 0.0) throw KeyError(key(k), "must be >= 0");
        return v;
    }
    std::optional<double> optional_number(const std::string& k) {
        if (!has(k)) return std::nullopt;
        return number(k);
    }
    int integer(const std::string& k, int def) {
        if (!has(k)) return def;
        const json& v = at(k);
        if (!v.is_number_integer()) throw KeyError(key(k), "expected an integer");
        return v.get<int>();
    }
    bool boolean(const std::string& k, bool def) {
        if (!has(k)) return def;
        const json& v = at(k);
        if (!v.is_boolean()) throw KeyError(key(k), "expected true or false");
        return v.get<bool>();
    }
    std::string string(const std::string& k, const std::string& def) {
        if (!has(k)) return def;
        const json& v = at(k);
        if (!v.is_string()) throw KeyError(key(k), "expected a string");
        return v.get<std::string>();
    }
    std::string choice(const std::string& k, const std::string& def, const std::vector<std::string>& allowed) {
        const std::string v = string(k, def);
        for (const auto& a : allowed)
            if (a == v) return v;
        std::string list;
        for (const auto& a : allowed) list += (list.empty() ? "" : "|") + a;
        throw KeyError(key(k), "'" + v + "' is not one of " + list);
    }

    void finish() const {
        for (const auto& [k, v] : j_.items())
            if (!used_.count(k)) throw KeyError(key(k), "unknown key");
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

inline std::vector<std::string> model_list(Reader& r, const std::string& k, const std::vector<std::string>& def) {
    if (!r.has(k)) return def;
    const json& v = r.at(k);
    if (!v.is_array() || v.empty()) throw KeyError(r.key(k), "expected a non-empty array of model names");
    std::vector<std::string> out;
    for (const auto& m : v) {
        if (!m.is_string()) throw KeyError(r.key(k), "expected model names");
        const auto s = m.get<std::string>();
        if (s != "rms" && s != "emt" && s != "switching") throw KeyError(r.key(k), "unknown model '" + s + "'");
        out.push_back(s);
    }
    return out;
}

} // namespace detail

inline std::vector<std::string> event_targets(const Scenario& s) {
    if (s.electrolyzer) return {"electrolyzer.v_rev", "electrolyzer.idc_ref"};
    return {"current_source.i_dc", "current_source.alpha_deg"};
}

inline Scenario from_json(const json& root) {
    using detail::Reader;
    Reader r(root, "");
    Scenario s;
    s.name = r.string("name", s.name);
    {
        std::vector<std::string> allowed = study_types();
        s.study = r.choice("study", s.study, allowed);
    }
    s.output = r.string("output", "");

    if (!r.has("source")) throw KeyError("source", "missing required block");
    {
        Reader b(r.at("source"), "source");
        s.source.v_peak = b.positive("v_peak", s.source.v_peak);
        s.source.f = b.positive("f", s.source.f);
        s.source.l_c = b.positive("l_c", s.source.l_c);
        b.finish();
    }
    if (r.has("rectifier")) {
        Reader b(r.at("rectifier"), "rectifier");
        auto& c = s.rectifier;
        c.pulses = b.integer("pulses", c.pulses);
        if (c.pulses != 6 && c.pulses != 12) throw KeyError("rectifier.pulses", "must be 6 or 12");
        c.pll_kp = b.non_negative("pll_kp", c.pll_kp);
        c.pll_ki = b.non_negative("pll_ki", c.pll_ki);
        c.firing_filter_hz = b.non_negative("firing_filter_hz", c.firing_filter_hz);
        c.current_mode = b.choice("current_mode", "exact", {"exact", "linear"}) == "exact" ? emt::CurrentMode::Exact
                                                                                         : emt::CurrentMode::Linear;
        c.rms_variant = b.choice("rms_variant", "extended", {"basic", "extended"}) == "extended"
                            ? rms::RmsVariant::Extended
                            : rms::RmsVariant::Basic;
        b.finish();
    }
    if (r.has("electrolyzer") == r.has("current_source"))
        throw KeyError("electrolyzer", "exactly one of 'electrolyzer' and 'current_source' must be given");
    if (r.has("electrolyzer")) {
        Reader b(r.at("electrolyzer"), "electrolyzer");
        ElectrolyzerConfig c;
        c.l_d = b.positive("l_d", c.l_d);
        c.r0 = b.positive("r0", c.r0);
        c.r1 = b.positive("r1", c.r1);
        c.c1 = b.positive("c1", c.c1);
        c.v_rev = b.non_negative("v_rev", c.v_rev);
        c.idc_ref = b.positive("idc_ref", c.idc_ref);
        c.kp = b.optional_number("kp");
        c.ki = b.optional_number("ki");
        if (c.kp.has_value() != c.ki.has_value()) throw KeyError(c.kp ? "electrolyzer.ki" : "electrolyzer.kp",
                                                                 "kp and ki must be given together");
        if (c.kp && (*c.kp < 0.0 || *c.ki < 0.0)) throw KeyError("electrolyzer.kp", "gains must be >= 0");
        c.bandwidth_hz = b.positive("bandwidth_hz", c.bandwidth_hz);
        c.alpha_min_deg = b.number("alpha_min_deg", c.alpha_min_deg);
        c.alpha_max_deg = b.number("alpha_max_deg", c.alpha_max_deg);
        if (!(0.0 <= c.alpha_min_deg && c.alpha_min_deg < c.alpha_max_deg && c.alpha_max_deg <= 180.0))
            throw KeyError("electrolyzer.alpha_max_deg", "need 0 <= alpha_min_deg < alpha_max_deg <= 180");
        b.finish();
        s.electrolyzer = c;
    } else {
        Reader b(r.at("current_source"), "current_source");
        CurrentSourceConfig c;
        c.i_dc = b.positive("i_dc", c.i_dc);
        c.alpha_deg = b.number("alpha_deg", c.alpha_deg);
        if (!(c.alpha_deg >= 0.0 && c.alpha_deg < 180.0)) throw KeyError("current_source.alpha_deg", "must be in [0, 180)");
        b.finish();
        s.current_source = c;
    }
    if (r.has("grid")) {
        Reader b(r.at("grid"), "grid");
        GridConfig g;
        g.l_g = b.positive("l_g", g.l_g);
        if (b.has("vsm")) {
            Reader v(b.at("vsm"), "grid.vsm");
            VsmConfig c;
            c.rating = v.positive("rating", c.rating);
            c.h = v.positive("h", c.h);
            c.d = v.positive("d", c.d);
            c.t_v = v.positive("t_v", c.t_v);
            c.k_v = v.non_negative("k_v", c.k_v);
            c.l_v = v.positive("l_v", c.l_v);
            c.share = v.number("share", c.share);
            if (!(c.share >= 0.0 && c.share < 1.0)) throw KeyError("grid.vsm.share", "must be in [0, 1)");
            v.finish();
            g.vsm = c;
        }
        b.finish();
        s.grid = g;
    }
    if (r.has("oracle")) {
        Reader b(r.at("oracle"), "oracle");
        s.oracle.dt = b.positive("dt", s.oracle.dt);
        s.oracle.event_tolerance = b.positive("event_tolerance", s.oracle.event_tolerance);
        s.oracle.pss_tolerance = b.positive("pss_tolerance", s.oracle.pss_tolerance);
        s.oracle.max_cycles = b.integer("max_cycles", s.oracle.max_cycles);
        if (s.oracle.max_cycles < 1) throw KeyError("oracle.max_cycles", "must be >= 1");
        b.finish();
    }
    if (r.has("simulate")) {
        Reader b(r.at("simulate"), "simulate");
        auto& c = s.simulate;
        c.t_end = b.positive("t_end", c.t_end);
        c.dt = b.positive("dt", c.dt);
        c.record_interval = b.positive("record_interval", c.record_interval);
        c.models = detail::model_list(b, "models", c.models);
        if (b.has("events")) {
            const json& ev = b.at("events");
            if (!ev.is_array()) throw KeyError("simulate.events", "expected an array");
            const auto targets = event_targets(s);
            for (std::size_t k = 0; k < ev.size(); ++k) {
                const std::string path = "simulate.events[" + std::to_string(k) + "]";
                Reader e(ev[k], path);
                EventConfig x;
                x.time = e.non_negative("time", 0.0);
                x.target = e.string("target", "");
                if (std::find(targets.begin(), targets.end(), x.target) == targets.end())
                    throw KeyError(path + ".target", "unknown event target '" + x.target + "'");
                x.value = e.number("value");
                e.finish();
                c.events.push_back(x);
            }
        }
        b.finish();
    }
    if (r.has("scan")) {
        Reader b(r.at("scan"), "scan");
        auto& c = s.scan;
        c.f_min = b.positive("f_min", c.f_min);
        c.f_max = b.positive("f_max", c.f_max);
        c.points = b.integer("points", c.points);
        if (c.points < 1) throw KeyError("scan.points", "must be >= 1");
        if (!(c.f_max > c.f_min)) throw KeyError("scan.f_max", "must exceed f_min");
        if (b.has("frequencies")) {
            const json& fs = b.at("frequencies");
            if (!fs.is_array()) throw KeyError("scan.frequencies", "expected an array");
            for (const auto& f : fs) {
                if (!f.is_number() || !(f.get<double>() > 0.0)) throw KeyError("scan.frequencies", "expected positive numbers");
                c.frequencies.push_back(f.get<double>());
            }
        }
        c.amplitude = b.positive("amplitude", c.amplitude);
        if (c.amplitude > 0.05) throw KeyError("scan.amplitude", "must be <= 0.05");
        c.settle_cycles = b.positive("settle_cycles", c.settle_cycles);
        c.measure_periods = b.positive("measure_periods", c.measure_periods);
        c.min_measure_cycles = b.positive("min_measure_cycles", c.min_measure_cycles);
        c.models = detail::model_list(b, "models", c.models);
        b.finish();
    }
    if (r.has("modes")) {
        Reader b(r.at("modes"), "modes");
        s.modes.model = b.choice("model", s.modes.model, {"rms", "emt"});
        b.finish();
    }
    if (r.has("sweep")) {
        Reader b(r.at("sweep"), "sweep");
        auto& c = s.sweep;
        c.param = b.choice("param", c.param, {"rectifier.pll_kp", "rectifier.pll_ki", "electrolyzer.bandwidth_hz"});
        c.from = b.positive("from", c.from);
        c.to = b.positive("to", c.to);
        c.points = b.integer("points", c.points);
        if (c.points < 2) throw KeyError("sweep.points", "must be >= 2");
        c.spacing = b.choice("spacing", c.spacing, {"log", "linear"});
        c.refine = b.boolean("refine", c.refine);
        c.model = b.choice("model", c.model, {"rms", "emt"});
        if (c.param == "electrolyzer.bandwidth_hz" && s.electrolyzer && s.electrolyzer->kp)
            throw KeyError("sweep.param", "bandwidth_hz has no effect when electrolyzer.kp/ki are given");
        if (c.param == "electrolyzer.bandwidth_hz" && !s.electrolyzer)
            throw KeyError("sweep.param", "needs an electrolyzer load");
        b.finish();
    }
    r.finish();
    return s;
}

inline json to_json(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["study"] = s.study;
    if (!s.output.empty()) j["output"] = s.output;
    j["source"] = {{"v_peak", s.source.v_peak}, {"f", s.source.f}, {"l_c", s.source.l_c}};
    const auto& rc = s.rectifier;
    j["rectifier"] = {{"pulses", rc.pulses},
                      {"pll_kp", rc.pll_kp},
                      {"pll_ki", rc.pll_ki},
                      {"firing_filter_hz", rc.firing_filter_hz},
                      {"current_mode", rc.current_mode == emt::CurrentMode::Exact ? "exact" : "linear"},
                      {"rms_variant", rc.rms_variant == rms::RmsVariant::Extended ? "extended" : "basic"}};
    if (s.electrolyzer) {
        const auto& e = *s.electrolyzer;
        json b = {{"l_d", e.l_d},         {"r0", e.r0},
                  {"r1", e.r1},           {"c1", e.c1},
                  {"v_rev", e.v_rev},     {"idc_ref", e.idc_ref},
                  {"bandwidth_hz", e.bandwidth_hz}, {"alpha_min_deg", e.alpha_min_deg},
                  {"alpha_max_deg", e.alpha_max_deg}};
        if (e.kp) b["kp"] = *e.kp;
        if (e.ki) b["ki"] = *e.ki;
        j["electrolyzer"] = b;
    }
    if (s.current_source) j["current_source"] = {{"i_dc", s.current_source->i_dc}, {"alpha_deg", s.current_source->alpha_deg}};
    if (s.grid) {
        json g = {{"l_g", s.grid->l_g}};
        if (s.grid->vsm) {
            const auto& v = *s.grid->vsm;
            g["vsm"] = {{"rating", v.rating}, {"h", v.h}, {"d", v.d}, {"t_v", v.t_v},
                        {"k_v", v.k_v},       {"l_v", v.l_v}, {"share", v.share}};
        }
        j["grid"] = g;
    }
    j["oracle"] = {{"dt", s.oracle.dt},
                   {"event_tolerance", s.oracle.event_tolerance},
                   {"pss_tolerance", s.oracle.pss_tolerance},
                   {"max_cycles", s.oracle.max_cycles}};
    json ev = json::array();
    for (const auto& e : s.simulate.events) ev.push_back({{"time", e.time}, {"target", e.target}, {"value", e.value}});
    j["simulate"] = {{"t_end", s.simulate.t_end},
                     {"dt", s.simulate.dt},
                     {"record_interval", s.simulate.record_interval},
                     {"models", s.simulate.models},
                     {"events", ev}};
    const auto& sc = s.scan;
    j["scan"] = {{"f_min", sc.f_min},
                 {"f_max", sc.f_max},
                 {"points", sc.points},
                 {"frequencies", sc.frequencies},
                 {"amplitude", sc.amplitude},
                 {"settle_cycles", sc.settle_cycles},
                 {"measure_periods", sc.measure_periods},
                 {"min_measure_cycles", sc.min_measure_cycles},
                 {"models", sc.models}};
    j["modes"] = {{"model", s.modes.model}};
    const auto& sw = s.sweep;
    j["sweep"] = {{"param", sw.param}, {"from", sw.from},       {"to", sw.to},        {"points", sw.points},
                  {"spacing", sw.spacing}, {"refine", sw.refine}, {"model", sw.model}};
    return j;
}

inline Scenario parse(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw KeyError("<file>", std::string("JSON syntax error: ") + e.what());
    }
    return from_json(j);
}

inline Scenario load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw KeyError("<file>", "cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

/// Returns a copy with one numeric parameter replaced (sweep patching).
inline Scenario with_parameter(const Scenario& s, const std::string& param, double value) {
    Scenario out = s;
    if (param == "rectifier.pll_kp") out.rectifier.pll_kp = value;
    else if (param == "rectifier.pll_ki") out.rectifier.pll_ki = value;
    else if (param == "electrolyzer.bandwidth_hz" && out.electrolyzer) out.electrolyzer->bandwidth_hz = value;
    else throw KeyError("sweep.param", "cannot patch '" + param + "'");
    return out;
}

// ----------------------------------------------------------- model kinds

enum class ModelKind { Rms, Emt, Switching };

inline ModelKind model_kind(const std::string& s) {
    if (s == "rms") return ModelKind::Rms;
    if (s == "emt") return ModelKind::Emt;
    if (s == "switching") return ModelKind::Switching;
    throw KeyError("model", "unknown model '" + s + "'");
}

inline std::string model_name(ModelKind k) {
    switch (k) {
    case ModelKind::Rms: return "rms";
    case ModelKind::Emt: return "emt";
    case ModelKind::Switching: return "switching";
    }
    return "?";
}

// ------------------------------------------------------ operating point

/// Quantities that fix the nominal operating point, derived from closed forms.
struct Nominal {
    double i_dc = 0.0;
    double v_dc = 0.0;
    double alpha = 0.0;     ///< firing angle (PI bias alpha0 for the closed loop)
    double mu = 0.0;
    std::complex<double> v_pcc{};  ///< terminal voltage, synchronous frame
    std::complex<double> i_ac{};   ///< rectifier AC current, synchronous frame
    std::complex<double> e_vsm{};  ///< VSM EMF (weak grid only)
    std::complex<double> i_vsm{};
    std::complex<double> i_grid{};
    net::PiParams pi;
};

inline rms::RmsParams rms_params(const Scenario& s) {
    rms::RmsParams p;
    p.commutation_inductance = s.source.l_c;
    p.grid_omega = 2.0 * kPi * s.source.f;
    p.pulses = s.rectifier.pulses;
    return p;
}

inline double current_scale(const Scenario& s, double i_dc) {
    return std::max(1.0, rms::kCurrentCoeff * i_dc * (s.rectifier.pulses / 6));
}

inline Nominal nominal(const Scenario& s) {
    const rms::RmsParams rp = rms_params(s);
    const double w = rp.grid_omega;
    Nominal n;
    if (s.electrolyzer) {
        n.i_dc = s.electrolyzer->idc_ref;
        n.v_dc = s.electrolyzer->v_rev + (s.electrolyzer->r0 + s.electrolyzer->r1) * n.i_dc;
    } else {
        n.i_dc = s.current_source->i_dc;
    }
    n.v_pcc = s.source.v_peak;
    // fixed-point pass over the weak-grid network: PCC voltage from line drops
    const int passes = s.grid ? 30 : 1;
    for (int k = 0; k < passes; ++k) {
        const double vm = std::abs(n.v_pcc);
        n.alpha = s.electrolyzer ? rms::firing_angle_for(vm, n.v_dc, n.i_dc, rp) : s.current_source->alpha_deg * net::kDeg;
        const rms::RmsSolution sol = rms::rms_extended(vm, n.alpha, n.i_dc, rp);
        if (!s.electrolyzer) n.v_dc = sol.v_dc;
        n.mu = sol.mu;
        n.i_ac = std::polar(sol.i_m, std::arg(n.v_pcc) - sol.phi);
        if (!s.grid) break;
        const std::complex<double> j(0.0, 1.0);
        const double share = s.grid->vsm ? s.grid->vsm->share : 0.0;
        n.i_vsm = share * n.i_ac;
        n.i_grid = n.i_ac - n.i_vsm;
        n.v_pcc = s.source.v_peak - j * w * s.grid->l_g * n.i_grid;
        if (s.grid->vsm) n.e_vsm = n.v_pcc + j * w * s.grid->vsm->l_v * n.i_vsm;
    }
    if (s.electrolyzer) {
        const auto& e = *s.electrolyzer;
        n.pi.alpha_min = e.alpha_min_deg * net::kDeg;
        n.pi.alpha_max = e.alpha_max_deg * net::kDeg;
        if (e.kp) {
            n.pi.kp = *e.kp;
            n.pi.ki = *e.ki;
        } else {
            const double bridges = s.rectifier.pulses / 6;
            const double l_tot = e.l_d + bridges * emt::effective_inductance(n.mu, s.source.l_c);
            const double r_tot = e.r0 + bridges * rp.r_dc();
            const double de = bridges * rms::kVoltageCoeff * std::abs(n.v_pcc) * std::sin(n.alpha);
            n.pi = net::pi_gains_for_bandwidth(e.bandwidth_hz, l_tot, r_tot, de, n.pi);
        }
    }
    return n;
}

// ------------------------------------------------------------ DAE build

/// Composed DAE plus the names used to measure and perturb it.
struct DaeSystem {
    ModelKind kind = ModelKind::Emt;
    dae::DaeModel model;
    Nominal nominal;
    dae::OperatingPoint guess;
    std::string v_d = "src.v_d", v_q = "src.v_q";  ///< terminal voltage seen by the rectifier
    std::string e_d = "src.v_d", e_q = "src.v_q";  ///< perturbed source EMF
    std::string i_d = "rect.i_d", i_q = "rect.i_q";
    std::string v_dc = "rect.v_dc", i_dc = "load.i_dc";
    std::string in_vpd = "src.v_pd", in_vpq = "src.v_pq";
    std::string in_iset, in_didt;  ///< current-source load only
};

inline void set_by_name(const dae::DaeModel& m, dae::OperatingPoint& op, const std::string& name, double v) {
    const auto r = m.ref(name);
    switch (r.kind) {
    case dae::VarKind::State: op.x[static_cast<Eigen::Index>(r.index)] = v; break;
    case dae::VarKind::Algebraic: op.z[static_cast<Eigen::Index>(r.index)] = v; break;
    case dae::VarKind::Input: op.u[static_cast<Eigen::Index>(r.index)] = v; break;
    }
}

inline double value_at(const dae::DaeModel& m, const std::string& name, const dae::OperatingPoint& op) {
    return m.value(name, op.x, op.z, op.u);
}

inline DaeSystem build_dae(const Scenario& s, ModelKind kind) {
    if (kind == ModelKind::Switching) throw KeyError("model", "the switching model is not a DAE");
    DaeSystem sys;
    sys.kind = kind;
    sys.nominal = nominal(s);
    const Nominal& n = sys.nominal;
    const double vb = s.source.v_peak;
    const double ib = current_scale(s, n.i_dc);
    const double w = 2.0 * kPi * s.source.f;

    net::SourceParams sp{s.source.v_peak, s.source.f, s.source.l_c};
    std::vector<dae::Fragment> frags;
    std::vector<dae::Connection> conns;
    std::vector<dae::Node> nodes;
    frags.push_back(net::stiff_source("src", sp));

    if (kind == ModelKind::Emt) {
        emt::EmtParams ep;
        ep.commutation_inductance = s.source.l_c;
        ep.pulses = s.rectifier.pulses;
        ep.pll_kp = s.rectifier.pll_kp;
        ep.pll_ki = s.rectifier.pll_ki;
        ep.omega_n = w;
        ep.firing_filter_hz = s.rectifier.firing_filter_hz;
        ep.voltage_base = vb;
        ep.current_base = ib;
        ep.current_mode = s.rectifier.current_mode;
        frags.push_back(emt::assemble_emt("rect", ep, {n.alpha, std::arg(n.v_pcc), 0.0}));
    } else {
        frags.push_back(rms::assemble_rms("rect", rms_params(s), s.rectifier.rms_variant, vb, ib));
    }

    if (s.electrolyzer) {
        const auto& e = *s.electrolyzer;
        const net::ElectrolyzerParams epar{e.l_d, e.r0, e.r1, e.c1, e.v_rev};
        frags.push_back(net::electrolyzer("load", epar, n.i_dc, n.v_dc, {n.i_dc, e.r1 * n.i_dc}));
        frags.push_back(net::pi_controller("pi", n.pi, e.idc_ref, n.alpha));
        conns.push_back({"load.v_dc", "rect.v_dc"});
        conns.push_back({"pi.i_dc", "load.i_dc"});
        conns.push_back({"rect.alpha_ref", "pi.alpha_ref"});
    } else {
        frags.push_back(net::current_source_load("load", n.i_dc));
        frags.push_back(net::setpoint("alpha", "rad", n.alpha));
        conns.push_back({"rect.alpha_ref", "alpha.out"});
        sys.in_iset = "load.i_set";
        sys.in_didt = "load.didt_set";
    }
    conns.push_back({"rect.i_dc", "load.i_dc"});
    if (kind == ModelKind::Emt) conns.push_back({"rect.didt", "load.didt"});

    if (s.grid) {
        frags.push_back(net::line("line_g", s.grid->l_g, w, ib, vb));
        conns.push_back({"line_g.from_d", "src.v_d"});
        conns.push_back({"line_g.from_q", "src.v_q"});
        conns.push_back({"line_g.to_d", "pcc.v_d"});
        conns.push_back({"line_g.to_q", "pcc.v_q"});
        dae::Node nd{"pcc.v_d", "V", n.v_pcc.real(), vb, "A", ib, {{"line_g.i_d", 1.0}, {"rect.i_d", -1.0}}};
        dae::Node nq{"pcc.v_q", "V", n.v_pcc.imag(), vb, "A", ib, {{"line_g.i_q", 1.0}, {"rect.i_q", -1.0}}};
        if (s.grid->vsm) {
            const auto& v = *s.grid->vsm;
            net::VsmParams vp{v.rating, v.h, v.d, v.t_v, v.k_v, v.l_v};
            const double p_ref = 1.5 * (n.e_vsm * std::conj(n.i_vsm)).real() / v.rating;
            auto frag = net::vsm_source("vsm", vp, w, std::abs(n.e_vsm), std::arg(n.e_vsm), p_ref);
            frag.inputs[2].value = std::abs(n.v_pcc);  // v_ref at the nominal terminal voltage
            frags.push_back(std::move(frag));
            frags.push_back(net::line("line_v", v.l_v, w, ib, vb));
            conns.push_back({"vsm.i_d", "line_v.i_d"});
            conns.push_back({"vsm.i_q", "line_v.i_q"});
            conns.push_back({"vsm.v_d", "pcc.v_d"});
            conns.push_back({"vsm.v_q", "pcc.v_q"});
            conns.push_back({"line_v.from_d", "vsm.e_d"});
            conns.push_back({"line_v.from_q", "vsm.e_q"});
            conns.push_back({"line_v.to_d", "pcc.v_d"});
            conns.push_back({"line_v.to_q", "pcc.v_q"});
            nd.currents.push_back({"line_v.i_d", 1.0});
            nq.currents.push_back({"line_v.i_q", 1.0});
        }
        nodes = {nd, nq};
        conns.push_back({"rect.v_d", "pcc.v_d"});
        conns.push_back({"rect.v_q", "pcc.v_q"});
        sys.v_d = "pcc.v_d";
        sys.v_q = "pcc.v_q";
    } else {
        conns.push_back({"rect.v_d", "src.v_d"});
        conns.push_back({"rect.v_q", "src.v_q"});
    }

    sys.model = dae::compose(frags, conns, nodes);

    // equilibrium guess from the closed forms
    const auto& m = sys.model;
    dae::OperatingPoint& g = sys.guess;
    g = dae::initial_point(m);
    set_by_name(m, g, "rect.v_dc", n.v_dc);
    set_by_name(m, g, "rect.i_d", n.i_ac.real());
    set_by_name(m, g, "rect.i_q", n.i_ac.imag());
    set_by_name(m, g, "rect.mu", n.mu);
    if (s.grid) {
        set_by_name(m, g, "line_g.i_d", n.i_grid.real());
        set_by_name(m, g, "line_g.i_q", n.i_grid.imag());
        if (s.grid->vsm) {
            set_by_name(m, g, "line_v.i_d", n.i_vsm.real());
            set_by_name(m, g, "line_v.i_q", n.i_vsm.imag());
        }
    }
    return sys;
}

inline dae::EquilibriumReport equilibrium(const DaeSystem& sys, const dae::OperatingPoint* warm = nullptr) {
    dae::OperatingPoint guess = sys.guess;
    if (warm && warm->x.size() == guess.x.size() && warm->z.size() == guess.z.size()) {
        guess.x = warm->x;
        guess.z = warm->z;
    }
    return dae::solve_equilibrium(sys.model, guess);
}

/// Input-event list in DAE terms.
inline std::vector<dae::InputEvent> dae_events(const Scenario& s, const DaeSystem& sys) {
    std::vector<dae::InputEvent> out;
    for (const auto& e : s.simulate.events) {
        if (e.target == "electrolyzer.v_rev") out.push_back({e.time, "load.v_rev", e.value});
        else if (e.target == "electrolyzer.idc_ref") out.push_back({e.time, "pi.i_ref", e.value});
        else if (e.target == "current_source.i_dc") out.push_back({e.time, sys.in_iset, e.value});
        else if (e.target == "current_source.alpha_deg") out.push_back({e.time, "alpha.value", e.value * net::kDeg});
    }
    return out;
}

// --------------------------------------------------------------- oracle

inline sw::SwitchingParams oracle_params(const Scenario& s) {
    if (s.grid) throw KeyError("grid", "the switching model supports the stiff-source topology only");
    const Nominal n = nominal(s);
    sw::SwitchingParams p;
    p.source = {s.source.v_peak, s.source.f, s.source.l_c};
    p.pulses = s.rectifier.pulses;
    p.pll_kp = s.rectifier.pll_kp;
    p.pll_ki = s.rectifier.pll_ki;
    p.voltage_base = s.source.v_peak;
    p.dt = s.oracle.dt;
    p.event_tolerance = s.oracle.event_tolerance;
    if (s.electrolyzer) {
        const auto& e = *s.electrolyzer;
        p.load = sw::LoadKind::Electrolyzer;
        p.electrolyzer = {e.l_d, e.r0, e.r1, e.c1, e.v_rev};
        p.closed_loop = true;
        p.pi = n.pi;
        p.i_ref = e.idc_ref;
        p.alpha0 = n.alpha;
        p.alpha = n.alpha;
    } else {
        p.load = sw::LoadKind::CurrentSource;
        p.i_set = n.i_dc;
        p.alpha = n.alpha;
    }
    return p;
}

/// Oracle in periodic steady state. Initialised from the EMT equilibrium when
/// one is given, else from the closed forms.
struct OracleSteadyState {
    sw::SwitchingParams params;
    sw::PeriodicSteadyState pss;
    double period = 0.02;
};

inline OracleSteadyState oracle_steady_state(const Scenario& s, const DaeSystem* emt_sys = nullptr,
                                             const dae::OperatingPoint* emt_op = nullptr) {
    OracleSteadyState out;
    out.params = oracle_params(s);
    out.period = 1.0 / s.source.f;
    const Nominal n = nominal(s);
    double i0 = n.i_dc, v1 = s.electrolyzer ? s.electrolyzer->r1 * n.i_dc : 0.0, xi = 0.0, th = 0.0, xp = 0.0;
    if (emt_sys && emt_op) {
        const auto& m = emt_sys->model;
        i0 = value_at(m, emt_sys->i_dc, *emt_op);
        if (s.electrolyzer) {
            v1 = value_at(m, "load.v1", *emt_op);
            xi = value_at(m, "pi.x_i", *emt_op);
        }
        if (emt_sys->kind == ModelKind::Emt) {
            th = value_at(m, "rect.theta_pll", *emt_op);
            xp = value_at(m, "rect.x_pll", *emt_op);
        }
    }
    sw::SwitchingSimulator sim(out.params);
    sim.initialize(0.0, i0, v1, xi, th, xp);
    out.pss = sw::run_to_periodic_steady_state(sim, s.oracle.pss_tolerance, s.oracle.max_cycles);
    return out;
}

// --------------------------------------------------------------- runners

/// Scan runner over a DAE system starting from an equilibrium.
inline scan::Runner dae_runner(const DaeSystem& sys, const dae::OperatingPoint& op) {
    return [&sys, op](const scan::InjectionSpec& spec, const std::function<void(const scan::Signals&)>& sink) {
        const auto& m = sys.model;
        const double w = 2.0 * kPi * spec.f_hz;
        Eigen::Index k_main = -1, k_aux = -1;
        double base_main = 0.0;
        switch (spec.kind) {
        case scan::Injection::DcCurrent:
            if (sys.in_iset.empty()) throw KeyError("current_source", "DC current injection needs a current-source load");
            k_main = static_cast<Eigen::Index>(m.input_index(sys.in_iset));
            k_aux = static_cast<Eigen::Index>(m.input_index(sys.in_didt));
            break;
        case scan::Injection::VoltageD: k_main = static_cast<Eigen::Index>(m.input_index(sys.in_vpd)); break;
        case scan::Injection::VoltageQ: k_main = static_cast<Eigen::Index>(m.input_index(sys.in_vpq)); break;
        }
        base_main = op.u[k_main];
        dae::IntegrateOptions opt;
        opt.t_end = spec.t_end;
        opt.dt = spec.max_dt;
        opt.record_every = 0;
        const double a = spec.amplitude;
        opt.input_modifier = [=](double t, dae::Vector& u) {
            u[k_main] = base_main + a * std::sin(w * t);
            if (k_aux >= 0) u[k_aux] = a * w * std::cos(w * t);
        };
        const auto zi = [&](const std::string& name) { return static_cast<Eigen::Index>(m.algebraic_index(name)); };
        const auto ref_v_dc = m.ref(sys.v_dc), ref_i_dc = m.ref(sys.i_dc);
        const Eigen::Index vd = zi(sys.v_d), vq = zi(sys.v_q), id = zi(sys.i_d), iq = zi(sys.i_q);
        opt.observer = [&](double t, const dae::Vector& x, const dae::Vector& z, const dae::Vector&) {
            auto pick = [&](const dae::VarRef& r) {
                return r.kind == dae::VarKind::State ? x[static_cast<Eigen::Index>(r.index)]
                                                     : z[static_cast<Eigen::Index>(r.index)];
            };
            scan::Signals sg;
            sg.t = t;
            sg.v_dc = pick(ref_v_dc);
            sg.i_dc = pick(ref_i_dc);
            sg.v = {z[vd], z[vq]};
            sg.i = {z[id], z[iq]};
            sink(sg);
        };
        dae::integrate(m, dae::OperatingPoint{op.x, op.z, op.u, 0.0}, opt);
    };
}

/// Scan runner over the switching oracle from its periodic steady state.
/// Time is reported relative to the steady-state instant, which is a whole
/// number of fundamental periods, so the source phase is preserved.
inline scan::Runner oracle_runner(const OracleSteadyState& ss) {
    return [&ss](const scan::InjectionSpec& spec, const std::function<void(const scan::Signals&)>& sink) {
        sw::SwitchingSimulator sim(ss.params);
        sim.set_state(ss.pss.state);
        const double t0 = ss.pss.state.t;
        const double w = 2.0 * kPi * spec.f_hz;
        const double a = spec.amplitude;
        sw::Perturbation pert;
        switch (spec.kind) {
        case scan::Injection::DcCurrent:
            pert.i_p = [=](double t) {
                const double tt = t - t0;
                return std::pair<double, double>{a * std::sin(w * tt), a * w * std::cos(w * tt)};
            };
            break;
        case scan::Injection::VoltageD: pert.v_p = [=](double t) { return DqPhasor{a * std::sin(w * (t - t0)), 0.0}; }; break;
        case scan::Injection::VoltageQ: pert.v_p = [=](double t) { return DqPhasor{0.0, a * std::sin(w * (t - t0))}; }; break;
        }
        sim.set_perturbation(pert);
        sim.advance_to(t0 + spec.t_end, [&](const sw::Sample& smp) {
            scan::Signals sg;
            sg.t = smp.t - t0;
            sg.v_dc = smp.v_dc;
            sg.i_dc = smp.i_dc;
            sg.v = smp.v_dq;
            sg.i = smp.i_dq;
            sink(sg);
        });
    };
}

inline scan::ScanPlan scan_plan(const Scenario& s) {
    scan::ScanPlan p;
    p.f_min = s.scan.f_min;
    p.f_max = s.scan.f_max;
    p.points = s.scan.points;
    p.frequencies = s.scan.frequencies;
    p.amplitude = s.scan.amplitude;
    p.settle_cycles = s.scan.settle_cycles;
    p.measure_periods = s.scan.measure_periods;
    p.min_measure_cycles = s.scan.min_measure_cycles;
    p.f_nominal = s.source.f;
    p.f_switching = s.rectifier.pulses * s.source.f;
    return p;
}

} // namespace thyrsim::scenario
