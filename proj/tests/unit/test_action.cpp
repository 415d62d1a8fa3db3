#include <chrono>
#include <cmath>

#include "doctest.h"
#include "ldpexit/action.hpp"
#include "../oracles.hpp"

using namespace ldp;

namespace {

ControlPath random_control(std::size_t steps, std::size_t modes, double dt, Philox4x32& rng, double scale = 1.0) {
    ControlPath psi(steps, modes, dt);
    for (auto& v : psi.values()) v = scale * rng.normal();
    return psi;
}

}  // namespace

TEST_SUITE("action") {

TEST_CASE("action of a constant control") {
    ControlPath psi(100, 2, 0.01);
    for (std::size_t i = 0; i < 100; ++i) psi.at(i)[0] = 2.0, psi.at(i)[1] = -1.0;
    CHECK(action_value(psi) == doctest::Approx(0.5 * 1.0 * 5.0));
    CHECK(psi.horizon() == doctest::Approx(1.0));
}

TEST_CASE("controlled OU with constant control is exact") {
    // x(t) = x0 e^{-t} + q c (1 - e^{-t}) for omega = 1.
    const auto spec = presets::ornstein_uhlenbeck(1.0, 2.0, 10.0);
    ControlPath psi(50, 1, 0.1);
    for (std::size_t i = 0; i < 50; ++i) psi.at(i)[0] = 0.3;
    const auto traj = controlled_trajectory(spec, SpectralField{1.0}, psi);
    REQUIRE(traj.states.size() == 51);
    for (std::size_t i = 0; i <= 50; ++i) {
        const double t = 0.1 * i;
        CHECK(traj.states[i][0] == doctest::Approx(std::exp(-t) + 0.6 * (1 - std::exp(-t))).epsilon(1e-13));
    }
}

TEST_CASE("rate function inverts the controlled system") {
    Philox4x32 rng(11, 0);
    for (const auto& spec : {presets::ornstein_uhlenbeck(), presets::linear_heat(4, 1.0, false), presets::cubic_heat(4)}) {
        for (int rep = 0; rep < 5; ++rep) {
            const auto psi = random_control(200, spec.mode_count, 0.005, rng);
            const auto traj = controlled_trajectory(spec, SpectralField(spec.mode_count), psi);
            const double rate = rate_function_of_path(spec, traj);
            CHECK(rate == doctest::Approx(action_value(psi)).epsilon(1e-9));
        }
    }
}

TEST_CASE("control_of_path error contract") {
    auto spec = presets::linear_heat(2, 1.0, false);
    spec.q_weights[1] = 0.0;
    ControlPath psi(10, 2, 0.1);
    const auto traj = controlled_trajectory(spec, SpectralField(2), psi);
    CHECK_THROWS_AS(control_of_path(spec, traj), std::domain_error);

    const auto mult = presets::multiplicative_heat(3);
    const auto t2 = controlled_trajectory(mult, SpectralField(3), ControlPath(10, 3, 0.1));
    CHECK_THROWS_AS(control_of_path(mult, t2), std::domain_error);

    auto uneven = controlled_trajectory(presets::ornstein_uhlenbeck(), SpectralField{0.0}, ControlPath(4, 1, 0.1));
    uneven.times[2] += 0.05;
    CHECK_THROWS_AS(control_of_path(presets::ornstein_uhlenbeck(), uneven), std::invalid_argument);
}

TEST_CASE("linear quasipotential closed forms") {
    const auto heat = presets::linear_heat(3, 1.0, false);
    CHECK(quasipotential_linear(heat, SpectralField{0.5, 0.1, 0.0}) == doctest::Approx(0.25 + 4 * 0.01));
    CHECK(quasipotential_linear_boundary(heat, 0.5) == doctest::Approx(0.25));

    auto degenerate = heat;
    degenerate.q_weights[1] = 0.0;
    CHECK(std::isinf(quasipotential_linear(degenerate, SpectralField{0.0, 0.1, 0.0})));

    auto damped = presets::ornstein_uhlenbeck();
    damped.f_kind = LinearDamping{0.5};
    CHECK(quasipotential_linear(damped, SpectralField{1.0}) == doctest::Approx(1.5));
    CHECK_THROWS_AS(quasipotential_linear(presets::cubic_heat(), SpectralField(8)), std::invalid_argument);
}

TEST_CASE("sup-grid boundary value equals the best single-node half-space") {
    const auto spec = presets::linear_heat(4, 1.0, true);
    const double v = quasipotential_linear_boundary(spec, 1.0);
    // Brute force: min over nodes of R^2 / (2 sum_k e_k(xi)^2 / (2 k^2)).
    double best = 1e300;
    for (int i = 1; i < 20000; ++i) {
        const double xi = i * std::numbers::pi / 20000;
        double g = 0.0;
        for (int k = 1; k <= 4; ++k) g += std::pow(oracle::sine_basis(k, xi), 2) / (2.0 * k * k);
        best = std::min(best, 1.0 / (2.0 * g));
    }
    CHECK(v >= best * (1 - 1e-12));      // grid nodes are a subset of [0, pi]
    CHECK(v <= best * 1.01);

    const auto r = quasipotential_minimize(spec, BoundaryTarget{1.0, {}}, 8.0, 0.005);
    CHECK(r.converged);
    CHECK(r.value == doctest::Approx(v).epsilon(0.02));
}

TEST_CASE("minimiser reaches the discrete minimum-norm oracle") {
    const auto spec = presets::linear_heat(3, 1.0, false);
    const std::vector<double> y{0.4, -0.2, 0.1};
    const double dt = 0.01, horizon = 4.0;
    const auto r = quasipotential_minimize(spec, PointTarget{SpectralField(y)}, horizon, dt);
    const double ref = oracle::discrete_min_action(spec.eigenvalues, spec.q_weights, y, dt, 400);
    CHECK(r.converged);
    CHECK(r.value == doctest::Approx(ref).epsilon(1e-3));
    CHECK(r.target_residual <= 1e-4);
}

TEST_CASE("penalised objective gradient matches finite differences") {
    Philox4x32 rng(12, 0);
    const std::vector<TargetSpec> targets{PointTarget{SpectralField{0.3, -0.1, 0.05}},
                                          BoundaryTarget{1.0, RegionConstraint{1, 0.0, 0.2, true}}};
    for (const auto& spec : {presets::cubic_heat(3), presets::multiplicative_heat(3), presets::linear_heat(3, 1.0, false)}) {
        for (const auto& target : targets) {
            const auto psi = random_control(30, 3, 0.05, rng, 2.0);
            std::vector<double> grad;
            penalized_objective(spec, target, 7.0, psi, &grad);
            auto f = [&](const std::vector<double>& v) {
                ControlPath p(30, 3, 0.05);
                std::copy(v.begin(), v.end(), p.values().begin());
                return penalized_objective(spec, target, 7.0, p, nullptr);
            };
            const std::vector<double> base(psi.values().begin(), psi.values().end());
            for (std::size_t i : {0u, 7u, 31u, 89u}) {
                const double fd = oracle::central_difference(f, base, i, 1e-6);
                CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
            }
        }
    }
}

TEST_CASE("scalar cubic quasipotential is twice the potential gap") {
    const auto r = quasipotential_minimize(presets::scalar_cubic(1.0), BoundaryTarget{1.0, {}}, 8.0, 0.002);
    CHECK(r.converged);
    CHECK(r.value == doctest::Approx(1.5).epsilon(0.01));
}

TEST_CASE("zero target costs nothing") {
    const auto r = quasipotential_minimize(presets::cubic_heat(4), PointTarget{SpectralField(4)}, 2.0, 0.01);
    CHECK(r.value == 0.0);
    CHECK(r.converged);
}

TEST_CASE("region constraint") {
    const RegionConstraint abs_band{2, 0.1, 0.3, true};
    CHECK(abs_band.contains(SpectralField{0.0, -0.2}));
    CHECK_FALSE(abs_band.contains(SpectralField{0.0, 0.5}));
    const RegionConstraint signed_band{1, 0.0, 1.0, false};
    CHECK_FALSE(signed_band.contains(SpectralField{-0.5, 0.0}));

    // Constrained boundary minimum for the two-mode heat ball: theta = R / sqrt(2) on mode 1.
    const auto spec = presets::linear_heat(2, 0.5, false);
    const double theta = 0.5 / std::sqrt(2.0);
    const auto r = quasipotential_minimize(spec, BoundaryTarget{0.5, RegionConstraint{1, 0.0, theta, true}}, 8.0, 0.01);
    CHECK(r.converged);
    CHECK(r.value == doctest::Approx(theta * theta + 4 * (0.25 - theta * theta)).epsilon(0.01));
}

TEST_CASE("invalid inputs") {
    const auto spec = presets::ornstein_uhlenbeck();
    CHECK_THROWS_AS(quasipotential_minimize(spec, PointTarget{SpectralField{1.0, 2.0}}, 1.0, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(quasipotential_minimize(spec, BoundaryTarget{1.0, {}}, 0.0, 0.1), std::invalid_argument);
    CHECK_THROWS_AS(quasipotential_minimize(spec, BoundaryTarget{1.0, {}}, 1.0, 2.0), std::invalid_argument);
}

}  // TEST_SUITE
