#include <cmath>
#include <set>

#include "doctest.h"
#include "ldpexit/simulate.hpp"
#include "../oracles.hpp"

using namespace ldp;

TEST_SUITE("simulate") {

TEST_CASE("philox known answer") {
    // Philox4x32-10 reference vector: counter 0, key 0.
    Philox4x32 rng(0, 0);
    CHECK(rng() == 0x6627e8d5u);
    CHECK(rng() == 0xe169c58du);
    CHECK(rng() == 0xbc57ac4cu);
    CHECK(rng() == 0x9b00dbd8u);
}

TEST_CASE("philox streams are reproducible and distinct") {
    Philox4x32 a(42, 7), b(42, 7), c(42, 8), d(43, 7);
    bool differs_stream = false, differs_key = false;
    for (int i = 0; i < 100; ++i) {
        const auto va = a(), vc = c(), vd = d();
        CHECK(va == b());
        differs_stream |= va != vc;
        differs_key |= va != vd;
    }
    CHECK(differs_stream);
    CHECK(differs_key);
}

TEST_CASE("philox moments") {
    Philox4x32 rng(1, 0);
    const int n = 200000;
    double su = 0, sn = 0, sn2 = 0, umin = 1, umax = 0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        umin = std::min(umin, u), umax = std::max(umax, u);
        su += u;
        const double g = rng.normal();
        sn += g, sn2 += g * g;
    }
    CHECK(umin > 0.0);
    CHECK(umax < 1.0);
    CHECK(std::abs(su / n - 0.5) < 5 * std::sqrt(1.0 / 12 / n));
    CHECK(std::abs(sn / n) < 5 / std::sqrt(double(n)));
    CHECK(std::abs(sn2 / n - 1.0) < 5 * std::sqrt(2.0 / n));
}

TEST_CASE("convolution stddev limits") {
    CHECK(convolution_stddev(-1.0, 1e-8) == doctest::Approx(1e-4).epsilon(1e-7));
    CHECK(convolution_stddev(-2.0, 50.0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(convolution_stddev(-1e-12, 1.0) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("noise-free linear step is the semigroup") {
    const auto spec = presets::linear_heat(4, 1.0, false);
    Stepper st(spec, 0.01, 0.0);
    const SpectralField x{0.3, -0.2, 0.1, 0.05};
    SpectralField out(4);
    const std::vector<double> g{1, 2, 3, 4};
    st.step(x.coeffs(), g, out.coeffs());
    const auto ref = semigroup_apply(spec, 0.01, x);
    for (std::size_t k = 0; k < 4; ++k) CHECK(out[k] == doctest::Approx(ref[k]).epsilon(1e-15));
}

TEST_CASE("OU marginal variance is exact per step") {
    // X_n ~ N(0, eps (1 - e^{-2 t}) / 2) for the exponential scheme at any dt.
    const auto spec = presets::ornstein_uhlenbeck(1.0, 1.0, 100.0);
    SimConfig sim;
    sim.dt = 0.1;
    sim.epsilon = 0.5;
    sim.x0 = SpectralField{0.0};
    const int paths = 20000, steps = 10;
    double s2 = 0.0;
    for (int p = 0; p < paths; ++p) {
        Philox4x32 rng(3, static_cast<std::uint64_t>(p));
        SpectralField x = sim.x0;
        for (int i = 0; i < steps; ++i) {
            const std::vector<double> g{rng.normal()};
            x = step(spec, sim, x, g);
        }
        s2 += x[0] * x[0];
    }
    const double expected = 0.5 * (1.0 - std::exp(-2.0)) / 2.0;
    CHECK(std::abs(s2 / paths - expected) < 4 * expected * std::sqrt(2.0 / paths));
}

TEST_CASE("run_to_exit contracts") {
    const auto spec = presets::ornstein_uhlenbeck();
    SimConfig sim;
    sim.epsilon = 0.5;
    sim.dt = 1e-2;
    sim.t_max = 1000;
    sim.x0 = SpectralField{2.0};
    CHECK_THROWS_AS(run_to_exit(spec, sim), std::invalid_argument);

    sim.x0 = SpectralField{0.0};
    sim.keep_trajectory = true;
    const auto [traj, rec] = run_to_exit(spec, sim);
    REQUIRE(traj);
    CHECK_FALSE(rec.censored);
    CHECK(std::abs(rec.exit_state[0]) >= 1.0);
    CHECK(traj->times.front() == 0.0);
    CHECK(traj->times.back() == doctest::Approx(rec.exit_time));

    sim.t_max = 0.05;
    sim.epsilon = 1e-6;
    const auto [t2, censored] = run_to_exit(spec, sim);
    CHECK(censored.censored);
    CHECK(censored.exit_time == doctest::Approx(0.05));

    sim.dt = -1;
    CHECK_THROWS_AS(run_to_exit(spec, sim), std::invalid_argument);
}

TEST_CASE("ensemble does not depend on the thread count") {
    const auto spec = presets::cubic_heat(4, 1.0);
    SimConfig sim;
    sim.epsilon = 0.5;
    sim.dt = 1e-3;
    sim.t_max = 50;
    sim.seed = 99;
    sim.x0 = SpectralField(4);
    sim.exit_rule = ExitRule::bridge;
    const auto a = ensemble_exit(spec, sim, 24, 1);
    const auto b = ensemble_exit(spec, sim, 24, 4);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].exit_time == b.records[i].exit_time);
        CHECK(a.records[i].exit_state == b.records[i].exit_state);
    }
    CHECK(a.mean_exit_time == b.mean_exit_time);
    CHECK(a.place.argmax_histogram == b.place.argmax_histogram);
}

TEST_CASE("symmetric OU exits split evenly") {
    const auto spec = presets::ornstein_uhlenbeck();
    SimConfig sim;
    sim.epsilon = 0.5;
    sim.dt = 1e-2;
    sim.t_max = 1e4;
    sim.seed = 5;
    sim.x0 = SpectralField{0.0};
    const std::size_t n = 2000;
    const auto st = ensemble_exit(spec, sim, n);
    CHECK(st.place.positive_mode1 + st.place.negative_mode1 == n);
    const double p = double(st.place.positive_mode1) / n;
    CHECK(std::abs(p - 0.5) < 3 * std::sqrt(0.25 / n));
}

TEST_CASE("bridge rule removes the discrete monitoring bias") {
    const auto spec = presets::ornstein_uhlenbeck();
    SimConfig sim;
    sim.epsilon = 0.5;
    sim.dt = 1e-2;
    sim.t_max = 1e4;
    sim.seed = 17;
    sim.x0 = SpectralField{0.0};
    const double ref = oracle::ou_mean_exit_time(0.5);
    CHECK(ref == doctest::Approx(4.501602416229074).epsilon(1e-6));

    sim.exit_rule = ExitRule::grid;
    const auto grid = ensemble_exit(spec, sim, 4000);
    sim.exit_rule = ExitRule::bridge;
    const auto bridge = ensemble_exit(spec, sim, 4000);
    // Grid monitoring overshoots by O(sqrt(dt)); the bridge estimate is unbiased to O(dt).
    CHECK(grid.mean_exit_time / ref - 1.0 > 0.1);
    CHECK(std::abs(bridge.mean_exit_time / ref - 1.0) < 4 * bridge.stderr_exit_time / ref + 0.01);
}

TEST_CASE("exit statistics fields") {
    const auto spec = presets::ornstein_uhlenbeck();
    SimConfig sim;
    sim.epsilon = 0.5;
    sim.dt = 1e-2;
    sim.t_max = 1.0;
    sim.x0 = SpectralField{0.0};
    const auto st = ensemble_exit(spec, sim, 200);
    CHECK(st.n_paths == 200);
    CHECK(st.censor_fraction > 0.0);
    CHECK(st.eps_log_mean == doctest::Approx(0.5 * std::log(st.mean_exit_time)));
    CHECK(st.reliable == (st.censor_fraction <= 0.5));
    CHECK(default_t_max(1.0, 0.5) == doctest::Approx(50 * std::exp(3.0)));
}

TEST_CASE("projection onto the boundary") {
    for (const auto& spec : {presets::cubic_heat(4, 1.0), presets::linear_heat(3, 0.5, false)}) {
        SpectralField x(spec.mode_count);
        x[0] = 2.0;
        x[1] = -0.5;
        const auto p = project_to_boundary(spec, x);
        CHECK(sup_norm(spec, p) >= spec.domain_radius);
        CHECK(sup_norm(spec, p) == doctest::Approx(spec.domain_radius).epsilon(1e-12));
        CHECK_FALSE(in_domain(spec, p));
    }
}

TEST_CASE("attraction and contraction on shipped specs") {
    AttractionSettings settings;
    settings.samples = 20;
    settings.horizon = 2.0;
    for (const auto& name : presets::names()) {
        CAPTURE(name);
        const auto spec = presets::by_name(name);
        const auto a = attraction_check(spec, settings, 1);
        CHECK(a.passed);
        const auto c = contraction_check(spec, settings, 0.01, 1);
        CHECK(c.passed);
    }
}

}  // TEST_SUITE
