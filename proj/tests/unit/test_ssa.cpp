#include "thyrsim/dae/model.hpp"
#include "thyrsim/scenario.hpp"
#include "thyrsim/ssa.hpp"
#include "thyrsim/study.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace thyrsim;
using ssa::cplx;

namespace {

dae::Fragment first_order() {
    dae::Fragment fr;
    fr.name = "a";
    fr.states = {{"x", "V", 0.0, 1.0}};
    fr.inputs = {{"u", "V", 0.0, 1.0}};
    fr.residual = [](const dae::LocalView& v, std::span<double> f, std::span<double>) { f[0] = -v.x[0] + v.u[0]; };
    return fr;
}

/// x' = z, 0 = z - 3x
dae::Fragment substitution() {
    dae::Fragment fr;
    fr.name = "b";
    fr.states = {{"x", "V", 0.0, 1.0}};
    fr.algebraics = {{"z", "V", 0.0, 1.0}};
    fr.residual = [](const dae::LocalView& v, std::span<double> f, std::span<double> g) {
        f[0] = v.z[0];
        g[0] = v.z[0] - 3.0 * v.x[0];
    };
    return fr;
}

std::vector<ssa::ModeReport> modes_of(const dae::Matrix& a) {
    std::vector<std::string> labels;
    for (Eigen::Index i = 0; i < a.rows(); ++i) labels.push_back("s" + std::to_string(i));
    return ssa::modes(a, labels);
}

} // namespace

TEST(Linearize, FirstOrderSystem) {
    const auto m = dae::compose({first_order()});
    const auto lm = ssa::linearize(m, dae::initial_point(m));
    EXPECT_NEAR(lm.a(0, 0), -1.0, 1e-9);
    EXPECT_NEAR(lm.b(0, 0), 1.0, 1e-9);
    const auto y = lm.frequency_response({"a.x"}, {{"a.u", cplx(1.0)}}, 2.0);
    EXPECT_NEAR(std::abs(y[0] - 1.0 / cplx(1.0, 2.0)), 0.0, 1e-9);
}

TEST(Linearize, AlgebraicSubstitution) {
    const auto m = dae::compose({substitution()});
    const auto lm = ssa::linearize(m, dae::initial_point(m));
    EXPECT_NEAR(lm.a(0, 0), 3.0, 1e-9);
    const auto [c, d] = lm.output("b.z");
    EXPECT_NEAR(c[0], 3.0, 1e-9);
}

TEST(Linearize, RejectsNonEquilibrium) {
    const auto m = dae::compose({first_order()});
    auto op = dae::initial_point(m);
    op.u[0] = 1.0;
    EXPECT_THROW(ssa::linearize(m, op), NonEquilibrium);
}

TEST(Linearize, NominalRectifierIsStable) {
    scenario::Scenario s;
    s.electrolyzer = scenario::ElectrolyzerConfig{};
    const auto lin = study::linearize(s, scenario::ModelKind::Emt);
    const auto ms = ssa::modes(lin.model);
    EXPECT_EQ(ms.size(), 4u);  // six states, two complex pairs reported once
    EXPECT_TRUE(ssa::stability_verdict(ms).stable);
    for (const auto& m : ms) EXPECT_LT(m.lambda.real(), 0.0);
}

TEST(Modes, ReferenceEigenvalueArithmetic) {
    const auto pair = ssa::mode_from_eigenvalue({-0.135, 0.437});
    EXPECT_NEAR(pair.zeta, 0.30, 0.005);
    EXPECT_NEAR(pair.f_n_hz, 0.070, 0.0005);
    const auto real = ssa::mode_from_eigenvalue({-0.188, 0.0});
    EXPECT_DOUBLE_EQ(real.zeta, 1.0);
    EXPECT_EQ(real.f_n_hz, 0.0);
}

TEST(Modes, DecoupledParticipation) {
    dae::Matrix a(2, 2);
    a << -1.0, 0.0, 0.0, -2.0;
    const auto ms = modes_of(a);
    ASSERT_EQ(ms.size(), 2u);
    EXPECT_NEAR(ms[0].lambda.real(), -1.0, 1e-14);
    EXPECT_NEAR(ms[0].participations[0].factor, 1.0, 1e-14);
    EXPECT_EQ(ms[0].dominant_state().state, "s0");
}

TEST(Modes, ParticipationsSumToOne) {
    std::mt19937 rng(3);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 20; ++trial) {
        dae::Matrix a(7, 7);
        for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = n01(rng);
        for (const auto& m : modes_of(a)) {
            double sum = 0.0;
            for (const auto& p : m.participations) sum += p.factor;
            EXPECT_NEAR(sum, 1.0, 1e-10);
        }
    }
}

TEST(Modes, ConjugatePairsReportedOnce) {
    dae::Matrix a(2, 2);
    a << -0.5, -3.0, 3.0, -0.5;
    const auto ms = modes_of(a);
    ASSERT_EQ(ms.size(), 1u);
    EXPECT_NEAR(ms[0].lambda.imag(), 3.0, 1e-12);
    EXPECT_NEAR(ms[0].f_n_hz, 3.0 / (2.0 * kPi), 1e-12);
}

TEST(Verdict, SignConventions) {
    const auto stable = ssa::stability_verdict({ssa::mode_from_eigenvalue({-1.0, 0.0}), ssa::mode_from_eigenvalue({-0.2, 4.0})});
    EXPECT_TRUE(stable.stable);
    EXPECT_NEAR(stable.margin, 0.2, 1e-15);
    const auto unstable = ssa::stability_verdict({ssa::mode_from_eigenvalue({-1.0, 0.0}), ssa::mode_from_eigenvalue({0.01, 1.0})});
    EXPECT_FALSE(unstable.stable);
    EXPECT_NEAR(unstable.margin, -0.01, 1e-15);
    const auto marginal = ssa::stability_verdict({ssa::mode_from_eigenvalue({0.0, 2.0})});
    EXPECT_FALSE(marginal.stable);
    EXPECT_TRUE(marginal.boundary);
    EXPECT_EQ(marginal.margin, 0.0);
    EXPECT_FALSE(std::signbit(marginal.margin));
}

TEST(Sweep, CrossingRefinedByBisection) {
    const double w = 5.0;
    ssa::LinearizeAt at = [&](double p) {
        ssa::LinearModel lm;
        lm.a.resize(3, 3);
        lm.a << p - 0.5, -w, 0.0, w, p - 0.5, 0.0, 0.0, 0.0, -3.0;
        lm.states = {"x", "y", "z"};
        lm.x_scale = dae::Vector::Ones(3);
        return lm;
    };
    std::vector<double> path;
    for (int k = 0; k <= 10; ++k) path.push_back(0.05 + 0.1 * k);
    const auto res = ssa::parameter_sweep(at, path);
    ASSERT_TRUE(res.crossing.has_value());
    EXPECT_NEAR(*res.crossing, 0.5, 0.01 * 0.5);
    ASSERT_TRUE(res.first_unstable.has_value());
    EXPECT_NEAR(*res.first_unstable, 0.55, 1e-12);
    ASSERT_TRUE(res.crossing_track.has_value());
    const auto& track = res.tracks[*res.crossing_track];
    for (std::size_t k = 1; k < track.size(); ++k) {
        ASSERT_TRUE(track[k] && track[k - 1]);
        EXPECT_GT(track[k]->real(), track[k - 1]->real());
        EXPECT_NEAR(track[k]->imag(), w, 1e-9);
    }
}

TEST(Sweep, IgnoredParameterGivesIdenticalSpectra) {
    dae::Matrix a(2, 2);
    a << -1.0, 2.0, -3.0, -0.5;
    ssa::LinearizeAt at = [&](double) {
        ssa::LinearModel lm;
        lm.a = a;
        lm.states = {"x", "y"};
        lm.x_scale = dae::Vector::Ones(2);
        return lm;
    };
    const auto res = ssa::parameter_sweep(at, {1.0, 2.0, 3.0});
    for (const auto& p : res.points) {
        ASSERT_EQ(p.modes.size(), res.points.front().modes.size());
        for (std::size_t i = 0; i < p.modes.size(); ++i) EXPECT_EQ(p.modes[i].lambda, res.points.front().modes[i].lambda);
    }
    EXPECT_FALSE(res.first_unstable.has_value());
    EXPECT_EQ(res.tracks.size(), 1u);
}

TEST(Sweep, FailedPointsAreKept) {
    ssa::LinearizeAt at = [&](double p) -> ssa::LinearModel {
        if (p > 1.5) throw NoConvergence("synthetic");
        ssa::LinearModel lm;
        lm.a = dae::Matrix::Constant(1, 1, -1.0);
        lm.states = {"x"};
        lm.x_scale = dae::Vector::Ones(1);
        return lm;
    };
    const auto res = ssa::parameter_sweep(at, {1.0, 2.0});
    ASSERT_EQ(res.points.size(), 2u);
    EXPECT_TRUE(res.points[0].ok);
    EXPECT_FALSE(res.points[1].ok);
    EXPECT_NE(res.points[1].error.find("NoConvergence"), std::string::npos);
}

TEST(Prony, RecoversDampedSinusoid) {
    const cplx lambda(-3.0, 40.0);
    const double dt = 1e-3;
    std::vector<double> x;
    for (int k = 0; k < 200; ++k) x.push_back(std::exp(lambda.real() * k * dt) * std::cos(lambda.imag() * k * dt + 0.4));
    const auto fit = ssa::fit_damped_sinusoid(x, dt);
    EXPECT_NEAR(fit.lambda.real(), lambda.real(), 1e-6);
    EXPECT_NEAR(fit.lambda.imag(), lambda.imag(), 1e-6);
    EXPECT_THROW(ssa::fit_damped_sinusoid({1.0, 2.0}, dt), NoConvergence);
}

TEST(Prony, DominantModeMatchesNonlinearResponse) {
    scenario::Scenario s;
    s.electrolyzer = scenario::ElectrolyzerConfig{};
    const auto lin = study::linearize(s, scenario::ModelKind::Emt);
    const auto v = ssa::validate_dominant_mode(lin.system.model, lin.model, 1e-3);
    EXPECT_NEAR(v.fit.f_n_hz / v.mode.f_n_hz, 1.0, 0.05);
    EXPECT_NEAR(v.fit.zeta / v.mode.zeta, 1.0, 0.05);
}
