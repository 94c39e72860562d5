#include "thyrsim/report.hpp"
#include "thyrsim/scenario.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace thyrsim;
namespace fs = std::filesystem;

namespace {

std::string key_of(const std::string& text) {
    try {
        scenario::parse(text);
    } catch (const scenario::KeyError& e) {
        return e.key();
    }
    return "<none>";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("thyrsim_test_" + name);
    fs::remove_all(d);
    return d;
}

} // namespace

TEST(Scenario, BundledFilesParseAndRoundTrip) {
    int seen = 0;
    for (const auto& entry : fs::directory_iterator(THYRSIM_SCENARIO_DIR)) {
        if (entry.path().extension() != ".json") continue;
        ++seen;
        SCOPED_TRACE(entry.path().filename().string());
        const auto s = scenario::load(entry.path().string());
        EXPECT_EQ(s.name, entry.path().stem().string());
        const auto j = scenario::to_json(s);
        EXPECT_EQ(scenario::to_json(scenario::from_json(j)), j);
        EXPECT_TRUE(s.electrolyzer.has_value() != s.current_source.has_value());
    }
    EXPECT_GE(seen, 5);
}

TEST(Scenario, DefaultsFillMissingKeys) {
    const auto s = scenario::parse(R"({"name": "x", "source": {}, "electrolyzer": {}})");
    EXPECT_EQ(s.study, "simulate");
    EXPECT_EQ(s.source.v_peak, 110.0);
    ASSERT_TRUE(s.electrolyzer);
    EXPECT_EQ(s.electrolyzer->idc_ref, 10e3);
}

TEST(Scenario, ErrorsNameTheKey) {
    EXPECT_EQ(key_of(R"({"electrolyzer": {}, "source": {"v_peak": -1}})"), "source.v_peak");
    EXPECT_EQ(key_of(R"({"electrolyzer": {}, "source": {"vpeak": 110}})"), "source.vpeak");
    EXPECT_EQ(key_of(R"({"source": {}, "electrolyzer": {}, "rectifier": {"pulses": 7}})"), "rectifier.pulses");
    EXPECT_EQ(key_of(R"({"source": {}, "electrolyzer": {}, "study": "dance"})"), "study");
    EXPECT_EQ(key_of(R"({"source": {}, "electrolyzer": {}, "simulate": {"models": ["emt", "spice"]}})"), "simulate.models");
    EXPECT_EQ(key_of(R"({"electrolyzer": {}})"), "source");
    EXPECT_EQ(key_of(R"({"source": {}})"), "electrolyzer");
    EXPECT_EQ(key_of("{not json"), "<file>");
    EXPECT_THROW(scenario::load("/nonexistent/scenario.json"), ConfigError);
}

TEST(Scenario, SweepPatchesKnownParameters) {
    auto s = scenario::parse(R"({"source": {}, "electrolyzer": {}})");
    EXPECT_EQ(scenario::with_parameter(s, "rectifier.pll_kp", 0.2).rectifier.pll_kp, 0.2);
    EXPECT_EQ(scenario::with_parameter(s, "electrolyzer.bandwidth_hz", 3.0).electrolyzer->bandwidth_hz, 3.0);
    EXPECT_THROW(scenario::with_parameter(s, "source.colour", 1.0), scenario::KeyError);
}

TEST(Report, WriteAtomicReplacesFile) {
    const auto dir = scratch_dir("atomic");
    const auto p = dir / "nested" / "out.txt";
    report::write_atomic(p, "first\n");
    report::write_atomic(p, "second\n");
    EXPECT_EQ(slurp(p), "second\n");
    EXPECT_FALSE(fs::exists(fs::path(p.string() + ".tmp")));
    fs::remove_all(dir);
}

TEST(Report, NumbersAreStable) {
    EXPECT_EQ(report::num(0.1 + 0.2), "0.3");
    EXPECT_EQ(report::rounded(0.1 + 0.2), 0.3);
    EXPECT_EQ(report::rounded(-0.0), 0.0);
    EXPECT_EQ(report::channel_stem(scan::Channel::Zout), "zout");
    EXPECT_EQ(report::channel_stem(scan::Channel::Yqd), "yqd");
}

TEST(Report, LinearModelIsDeterministic) {
    const auto s = scenario::parse(R"({"source": {}, "electrolyzer": {}})");
    const auto a = report::dump(report::linear_model_json(study::linearize(s, scenario::ModelKind::Emt).model, "emt"));
    const auto b = report::dump(report::linear_model_json(study::linearize(s, scenario::ModelKind::Emt).model, "emt"));
    EXPECT_EQ(a, b);
    const auto j = report::json::parse(a);
    EXPECT_EQ(j["states"].size(), j["a"].size());
    const auto lm = study::linearize(s, scenario::ModelKind::Emt).model;
    const auto m = report::modes_json(ssa::modes(lm), "emt");
    EXPECT_TRUE(m["verdict"]["stable"].get<bool>());
}

TEST(Report, CompareOfFileWithItselfPasses) {
    scan::FrequencyResponse fr;
    fr.f_hz = {2.0, 20.0};
    fr.value = {{1e-3, 2e-4}, {2e-3, -1e-3}};
    fr.shifted = {false, false};
    const auto dir = scratch_dir("compare");
    report::write_atomic(dir / "a.csv", report::bode_csv(fr));
    std::ifstream in(dir / "a.csv");
    const auto back = scan::read_bode_csv(in);
    const auto rep = scan::compare(back, back, {});
    EXPECT_TRUE(rep.pass);
    EXPECT_EQ(rep.max_mag_db, 0.0);
    const auto j = report::compare_json(rep, {});
    EXPECT_TRUE(j["pass"].get<bool>());
    EXPECT_TRUE(j["tolerance"]["f_max"].is_null());
    fs::remove_all(dir);
}

TEST(Report, EnvelopeCsv) {
    study::Envelope env;
    env.period = 0.02;
    env.lo = {1.0, 2.0};
    env.hi = {3.0, 4.0};
    EXPECT_EQ(report::envelope_csv(env),
              "cycle,t_start [s],t_end [s],i_dc_min [A],i_dc_max [A]\n0,0,0.02,1,3\n1,0.02,0.04,2,4\n");
    EXPECT_TRUE(env.contains(0.03, 3.0));
    EXPECT_FALSE(env.contains(0.03, 4.5));
    EXPECT_EQ(env.cycle(0.05), static_cast<std::size_t>(-1));
}
