// thyrsim: batch front end for scenario studies.
//
//   thyrsim run --scenario vrev_step.json
//   thyrsim scan-dc --scenario dc_impedance_scan.json --model emt --out out/dc_impedance_scan
//   thyrsim compare a.csv b.csv --mag-db 1 --phase-deg 5 --f-max 150
//
// Exit codes: 0 ok, 1 study failure or failed comparison, 2 configuration error.

#include "thyrsim/report.hpp"
#include "thyrsim/scenario.hpp"
#include "thyrsim/study.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace thyrsim;
using scenario::ModelKind;

namespace {

struct Options {
    std::string scenario_path;
    std::string out;
    std::vector<std::string> models;
    std::optional<std::uint64_t> seed;
    double noise = 0.0;  ///< relative standard deviation of measurement noise
};

struct Context {
    const Options& opt;
    scenario::Scenario s;
    fs::path out;
    json meta;
    std::vector<std::string> files;

    void write(const std::string& name, const std::string& content) {
        report::write_atomic(out / name, content);
        files.push_back(name);
        std::cout << (out / name).string() << '\n';
    }
};

fs::path output_dir(const Options& opt, const scenario::Scenario& s) {
    if (!opt.out.empty()) return opt.out;
    if (!s.output.empty()) return s.output;
    return fs::path("out") / s.name;
}

std::vector<ModelKind> resolve_models(const Options& opt, const std::vector<std::string>& from_scenario) {
    std::vector<ModelKind> out;
    for (const auto& m : opt.models.empty() ? from_scenario : opt.models) out.push_back(scenario::model_kind(m));
    return out;
}

std::string single_model(const Options& opt, const std::string& from_scenario) {
    if (opt.models.size() > 1) throw scenario::KeyError("model", "this study takes a single model");
    const std::string m = opt.models.empty() ? from_scenario : opt.models.front();
    scenario::model_kind(m);
    return m;
}

/// Gaussian measurement noise on every scanned signal, scaled by the
/// operating point so that --noise is relative.
study::RunnerWrap noise_wrap(const Options& opt, const scenario::Scenario& s) {
    if (opt.noise <= 0.0) return {};
    if (!opt.seed) throw scenario::KeyError("seed", "--noise needs --seed");
    const auto nom = scenario::nominal(s);
    const double v = std::abs(nom.v_pcc), i = std::abs(nom.i_ac);
    const std::array<double, 6> sigma{opt.noise * std::abs(nom.v_dc), opt.noise * std::abs(nom.i_dc), opt.noise * v,
                                      opt.noise * v, opt.noise * i, opt.noise * i};
    const std::uint64_t seed = *opt.seed;
    return [sigma, seed](scan::Runner run) { return scan::with_noise(std::move(run), sigma, seed); };
}

// ---------------------------------------------------------------- studies

void do_simulate(Context& c) {
    std::vector<study::SimulationResult> results;
    for (const ModelKind k : resolve_models(c.opt, c.s.simulate.models)) {
        results.push_back(study::simulate(c.s, k));
        c.write(scenario::model_name(k) + "_trajectory.csv", report::trajectory_csv(results.back().trajectory));
    }
    const study::Envelope* env = nullptr;
    for (const auto& r : results)
        if (r.envelope) env = &*r.envelope;
    if (env) c.write("switching_envelope.csv", report::envelope_csv(*env));
    if (results.size() > 1 || env) c.write("i_dc_comparison.csv", report::i_dc_comparison_csv(results, "load.i_dc"));

    json summary = json::object();
    for (const auto& r : results) {
        const auto i_dc = r.trajectory.series("load.i_dc");
        json m = {{"samples", r.trajectory.t.size()}, {"i_dc_final", report::rounded(i_dc.back())}};
        if (env) {
            const auto viol = study::envelope_violations(*env, r.trajectory.t, i_dc);
            m["envelope_violations"] = viol.size();
            if (!viol.empty()) {
                m["first_violation_time"] = report::rounded(viol.front().first);
                m["last_violation_time"] = report::rounded(viol.back().first);
            }
        }
        summary[scenario::model_name(r.model)] = std::move(m);
    }
    c.write("simulate_summary.json", report::dump(summary));
}

void do_scan_dc(Context& c) {
    const auto wrap = noise_wrap(c.opt, c.s);
    for (const ModelKind k : resolve_models(c.opt, c.s.scan.models)) {
        const auto fr = study::scan_dc(c.s, k, wrap);
        c.write("zout_" + scenario::model_name(k) + ".csv", report::bode_csv(fr));
    }
}

void do_scan_ac(Context& c) {
    const auto wrap = noise_wrap(c.opt, c.s);
    for (const ModelKind k : resolve_models(c.opt, c.s.scan.models)) {
        const auto frs = study::scan_ac(c.s, k, wrap);
        for (const auto& fr : frs)
            c.write(report::channel_stem(fr.channel) + "_" + scenario::model_name(k) + ".csv", report::bode_csv(fr));
    }
}

void do_linearize(Context& c) {
    const std::string model = single_model(c.opt, c.s.modes.model);
    const auto lin = study::linearize(c.s, scenario::model_kind(model));
    c.write("linear_model.json", report::dump(report::linear_model_json(lin.model, model)));
}

void do_modes(Context& c) {
    const std::string model = single_model(c.opt, c.s.modes.model);
    const auto lin = study::linearize(c.s, scenario::model_kind(model));
    const auto ms = ssa::modes(lin.model);
    c.write("linear_model.json", report::dump(report::linear_model_json(lin.model, model)));
    c.write("modes.json", report::dump(report::modes_json(ms, model)));
    const auto v = ssa::stability_verdict(ms);
    std::cout << (v.stable ? "stable" : "unstable") << ", max Re(lambda) = " << report::num(v.max_real, 6) << '\n';
}

void do_sweep(Context& c) {
    c.s.sweep.model = single_model(c.opt, c.s.sweep.model);
    const auto res = study::sweep(c.s);
    c.write("sweep.csv", report::sweep_csv(res, c.s.sweep.param));
    c.write("sweep.json", report::dump(report::sweep_json(res, c.s.sweep)));
    if (res.crossing) std::cout << "crossing at " << c.s.sweep.param << " = " << report::num(*res.crossing, 6) << '\n';
    else std::cout << "no stability boundary on the path\n";
}

void run_study(const Options& opt, const std::string& study_type, const std::string& command) {
    Context c{opt, scenario::load(opt.scenario_path), {}, json::object(), {}};
    c.out = output_dir(opt, c.s);
    const auto started = std::chrono::steady_clock::now();
    if (study_type == "simulate") do_simulate(c);
    else if (study_type == "scan_dc") do_scan_dc(c);
    else if (study_type == "scan_ac") do_scan_ac(c);
    else if (study_type == "linearize") do_linearize(c);
    else if (study_type == "modes") do_modes(c);
    else if (study_type == "sweep") do_sweep(c);
    else throw scenario::KeyError("study", "unknown study '" + study_type + "'");
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

    // run metadata lives apart from the numeric payload so the latter stays reproducible
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    json meta;
    meta["command"] = command;
    meta["study"] = study_type;
    meta["scenario_file"] = opt.scenario_path;
    meta["scenario"] = scenario::to_json(c.s);
    meta["models"] = opt.models;
    meta["seed"] = opt.seed ? json(*opt.seed) : json(nullptr);
    meta["noise"] = opt.noise;
    meta["threads"] = scan::worker_count();
    meta["started_utc"] = stamp;
    meta["elapsed_s"] = elapsed;
    meta["files"] = c.files;
    report::write_atomic(c.out / "run.json", report::dump(meta));
}

int run_compare(const std::string& a_path, const std::string& b_path, const scan::Tolerance& tol, const std::string& out) {
    auto read = [](const std::string& p) {
        std::ifstream in(p);
        if (!in) throw scenario::KeyError("<file>", "cannot open '" + p + "'");
        return scan::read_bode_csv(in);
    };
    const auto rep = scan::compare(read(a_path), read(b_path), tol);
    const json j = report::compare_json(rep, tol);
    if (!out.empty()) report::write_atomic(fs::path(out) / "compare.json", report::dump(j));
    std::cout << (rep.pass ? "PASS" : "FAIL") << ": max |d mag| " << report::num(rep.max_mag_db, 4) << " dB, max |d phase| "
              << report::num(rep.max_phase_deg, 4) << " deg\n";
    return rep.pass ? 0 : 1;
}

int report_error(const std::string& kind, const std::string& key, const std::string& message, int code) {
    json e = {{"error", kind}, {"key", key.empty() ? json(nullptr) : json(key)}, {"message", message}};
    std::cerr << e.dump() << '\n';
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Thyristor rectifier simulation and small-signal analysis"};
    app.require_subcommand(1);

    Options opt;
    auto add_common = [&](CLI::App* sub, bool with_scenario) {
        if (with_scenario) sub->add_option("--scenario", opt.scenario_path, "scenario JSON file")->required();
        sub->add_option("--out", opt.out, "output directory (default: scenario output or out/<name>)");
        sub->add_option("--model", opt.models, "rms, emt or switching; repeatable")
            ->check(CLI::IsMember({"rms", "emt", "switching"}));
        sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& v) { opt.seed = v; }, "seed for measurement noise");
        sub->add_option("--noise", opt.noise, "relative std. deviation of scan measurement noise")->check(CLI::NonNegativeNumber);
    };

    struct Study {
        const char* command;
        const char* type;
        const char* help;
    };
    const std::vector<Study> studies = {
        {"simulate", "simulate", "time-domain run of each model"},
        {"scan-dc", "scan_dc", "DC output impedance scan"},
        {"scan-ac", "scan_ac", "AC dq admittance scan"},
        {"linearize", "linearize", "state-space model at the equilibrium"},
        {"modes", "modes", "eigenvalues, damping and participation"},
        {"sweep", "sweep", "parameter sweep with eigenvalue tracking"},
    };
    std::string selected;
    std::string selected_type;

    auto* run = app.add_subcommand("run", "run the study named in the scenario");
    add_common(run, true);
    run->callback([&] { selected = "run"; });
    for (const auto& st : studies) {
        auto* sub = app.add_subcommand(st.command, st.help);
        add_common(sub, true);
        sub->callback([&, st] {
            selected = st.command;
            selected_type = st.type;
        });
    }

    std::string cmp_a, cmp_b;
    scan::Tolerance tol;
    auto* cmp = app.add_subcommand("compare", "compare two Bode CSV files");
    cmp->add_option("a", cmp_a, "first response")->required();
    cmp->add_option("b", cmp_b, "second response")->required();
    cmp->add_option("--mag-db", tol.mag_db, "magnitude tolerance [dB]");
    cmp->add_option("--phase-deg", tol.phase_deg, "phase tolerance [deg]");
    cmp->add_option("--f-min", tol.f_min, "lowest judged frequency [Hz]");
    cmp->add_option("--f-max", tol.f_max, "highest judged frequency [Hz]");
    cmp->add_option("--out", opt.out, "directory for compare.json");
    cmp->callback([&] { selected = "compare"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report_error("ConfigError", "", e.what(), 2);
    }

    try {
        if (selected == "compare") return run_compare(cmp_a, cmp_b, tol, opt.out);
        std::string type = selected_type;
        if (selected == "run") type = scenario::load(opt.scenario_path).study;
        run_study(opt, type, selected);
        return 0;
    } catch (const scenario::KeyError& e) {
        return report_error(e.kind(), e.key(), e.what(), 2);
    } catch (const ConfigError& e) {
        return report_error(e.kind(), "", e.what(), 2);
    } catch (const Error& e) {
        return report_error(e.kind(), "", e.what(), 1);
    } catch (const fs::filesystem_error& e) {
        return report_error("IoError", "", e.what(), 1);
    } catch (const std::exception& e) {
        return report_error("InternalError", "", e.what(), 1);
    }
}
