#pragma once

// Result serialisation shared by the command-line front end and the tests.
// Numbers are printed with fixed significant digits so that repeated runs
// give byte-identical files.

#include "thyrsim/scan.hpp"
#include "thyrsim/ssa.hpp"
#include "thyrsim/study.hpp"

#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace thyrsim::report {

using nlohmann::json;

/// Writes `content` next to `path` and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw ConfigError("cannot write '" + tmp.string() + "'");
        os << content;
        os.flush();
        if (!os) throw ConfigError("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

/// Round-trip-safe but stable number for JSON payloads.
inline double rounded(double v, int digits = 12) {
    if (!std::isfinite(v) || v == 0.0) return v == 0.0 ? 0.0 : v;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return std::strtod(buf, nullptr);
}

inline std::string num(double v, int digits = 10) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline std::string dump(const json& j) { return j.dump(2) + "\n"; }

// -------------------------------------------------------------- simulate

inline std::string trajectory_csv(const dae::Trajectory& tr) {
    std::ostringstream os;
    tr.write_csv(os);
    return os.str();
}

inline std::string envelope_csv(const study::Envelope& env) {
    std::ostringstream os;
    os << "cycle,t_start [s],t_end [s],i_dc_min [A],i_dc_max [A]\n";
    for (std::size_t k = 0; k < env.lo.size(); ++k)
        os << k << ',' << num(env.period * static_cast<double>(k)) << ',' << num(env.period * static_cast<double>(k + 1))
           << ',' << num(env.lo[k]) << ',' << num(env.hi[k]) << '\n';
    return os.str();
}

/// Linear interpolation on a time-sorted series; holds the end values outside.
inline double interpolate(const std::vector<double>& t, const std::vector<double>& v, double at) {
    if (t.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (at <= t.front()) return v.front();
    if (at >= t.back()) return v.back();
    const auto it = std::upper_bound(t.begin(), t.end(), at);
    const auto k = static_cast<std::size_t>(it - t.begin());
    const double t0 = t[k - 1], t1 = t[k];
    if (t1 <= t0) return v[k];
    return v[k - 1] + (v[k] - v[k - 1]) * (at - t0) / (t1 - t0);
}

/// DC current of every model on the time grid of the first result, plus the
/// oracle envelope bounds when one is available.
inline std::string i_dc_comparison_csv(const std::vector<study::SimulationResult>& results, const std::string& i_dc_column) {
    if (results.empty()) return {};
    const study::SimulationResult* grid = &results.front();
    const study::Envelope* env = nullptr;
    for (const auto& r : results)
        if (r.envelope) grid = &r, env = &*r.envelope;
    std::ostringstream os;
    os << "time [s]";
    std::vector<std::vector<double>> series;
    for (const auto& r : results) {
        os << ",i_dc_" << scenario::model_name(r.model) << " [A]";
        series.push_back(r.trajectory.series(i_dc_column));
    }
    if (env) os << ",envelope_min [A],envelope_max [A]";
    os << '\n';
    for (const double t : grid->trajectory.t) {
        os << num(t, 9);
        for (std::size_t m = 0; m < results.size(); ++m) os << ',' << num(interpolate(results[m].trajectory.t, series[m], t));
        if (env) {
            const std::size_t k = env->cycle(t);
            if (k == static_cast<std::size_t>(-1)) os << ",,";
            else os << ',' << num(env->lo[k]) << ',' << num(env->hi[k]);
        }
        os << '\n';
    }
    return os.str();
}

// ----------------------------------------------------------------- scans

inline std::string bode_csv(const scan::FrequencyResponse& fr) {
    std::ostringstream os;
    scan::write_bode_csv(os, fr);
    return os.str();
}

/// File stem for a scan channel: zout, ydd, ydq, yqd, yqq.
inline std::string channel_stem(scan::Channel c) {
    std::string n = scan::channel_name(c);
    std::string out;
    for (char ch : n)
        if (ch != '_') out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
}

// ---------------------------------------------------------- linearisation

inline json matrix_json(const dae::Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(rounded(m(i, j)));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline json named_values(const std::vector<std::string>& names, const dae::Vector& v) {
    json o = json::object();
    for (std::size_t i = 0; i < names.size() && static_cast<Eigen::Index>(i) < v.size(); ++i)
        o[names[i]] = rounded(v[static_cast<Eigen::Index>(i)]);
    return o;
}

inline json linear_model_json(const ssa::LinearModel& lm, const std::string& model) {
    json j;
    j["model"] = model;
    j["states"] = lm.states;
    j["algebraics"] = lm.algebraics;
    j["inputs"] = lm.inputs;
    j["a"] = matrix_json(lm.a);
    j["b"] = matrix_json(lm.b);
    j["operating_point"] = {{"x", named_values(lm.states, lm.point.x)},
                            {"z", named_values(lm.algebraics, lm.point.z)},
                            {"u", named_values(lm.inputs, lm.point.u)}};
    j["azz_rcond"] = rounded(lm.azz_rcond, 6);
    return j;
}

// ------------------------------------------------------------------ modes

inline json mode_json(const ssa::ModeReport& m) {
    json j;
    j["lambda_re"] = rounded(m.lambda.real());
    j["lambda_im"] = rounded(m.lambda.imag());
    j["zeta"] = rounded(m.zeta);
    j["f_n_hz"] = rounded(m.f_n_hz);
    json parts = json::array();
    for (const auto& p : m.participations) parts.push_back({{"state", p.state}, {"factor", rounded(p.factor)}});
    j["participations"] = std::move(parts);
    return j;
}

inline json verdict_json(const ssa::Verdict& v) {
    return {{"stable", v.stable}, {"max_real", rounded(v.max_real)}, {"margin", rounded(v.margin)}, {"boundary", v.boundary}};
}

inline json modes_json(const std::vector<ssa::ModeReport>& ms, const std::string& model) {
    json list = json::array();
    for (const auto& m : ms) list.push_back(mode_json(m));
    return {{"model", model}, {"verdict", verdict_json(ssa::stability_verdict(ms))}, {"modes", std::move(list)}};
}

// ------------------------------------------------------------------ sweep

inline std::string sweep_csv(const ssa::SweepResult& r, const std::string& param) {
    std::ostringstream os;
    os << param;
    for (std::size_t k = 0; k < r.tracks.size(); ++k) os << ",mode" << k << "_re,mode" << k << "_im";
    os << ",max_re\n";
    for (std::size_t p = 0; p < r.points.size(); ++p) {
        const auto& pt = r.points[p];
        os << num(pt.value, 12);
        for (const auto& track : r.tracks) {
            if (p < track.size() && track[p]) os << ',' << num(track[p]->real()) << ',' << num(track[p]->imag());
            else os << ",,";
        }
        os << ',' << (pt.ok ? num(pt.verdict.max_real) : std::string()) << '\n';
    }
    return os.str();
}

inline json optional_number(const std::optional<double>& v) { return v ? json(rounded(*v)) : json(nullptr); }

inline json sweep_json(const ssa::SweepResult& r, const scenario::SweepConfig& cfg) {
    json pts = json::array();
    for (const auto& p : r.points) {
        json o = {{"value", rounded(p.value)}, {"ok", p.ok}};
        if (p.ok) o["verdict"] = verdict_json(p.verdict);
        else o["error"] = p.error;
        pts.push_back(std::move(o));
    }
    json j;
    j["param"] = cfg.param;
    j["model"] = cfg.model;
    j["first_unstable"] = optional_number(r.first_unstable);
    j["crossing"] = optional_number(r.crossing);
    j["crossing_track"] = r.crossing_track ? json(*r.crossing_track) : json(nullptr);
    j["points"] = std::move(pts);
    return j;
}

// ---------------------------------------------------------------- compare

inline json compare_json(const scan::CompareReport& rep, const scan::Tolerance& tol) {
    json pts = json::array();
    for (const auto& p : rep.points)
        pts.push_back({{"f_hz", rounded(p.f_hz)},
                       {"d_mag_db", rounded(p.d_mag_db, 8)},
                       {"d_phase_deg", rounded(p.d_phase_deg, 8)},
                       {"judged", p.judged},
                       {"pass", p.pass}});
    json j;
    j["tolerance"] = {{"mag_db", tol.mag_db}, {"phase_deg", tol.phase_deg}, {"f_min", tol.f_min},
                      {"f_max", tol.f_max >= 1e300 ? json(nullptr) : json(tol.f_max)}};
    j["max_mag_db"] = rounded(rep.max_mag_db, 8);
    j["mean_mag_db"] = rounded(rep.mean_mag_db, 8);
    j["max_phase_deg"] = rounded(rep.max_phase_deg, 8);
    j["mean_phase_deg"] = rounded(rep.mean_phase_deg, 8);
    j["pass"] = rep.pass;
    j["points"] = std::move(pts);
    return j;
}

} // namespace thyrsim::report
