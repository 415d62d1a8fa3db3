#include <cmath>
#include <numbers>

#include "doctest.h"
#include "ldpexit/model.hpp"
#include "ldpexit/random.hpp"
#include "../oracles.hpp"

using namespace ldp;

namespace {

SpectralField random_coeffs(std::size_t n, Philox4x32& rng) {
    SpectralField x(n);
    for (std::size_t k = 0; k < n; ++k) x[k] = rng.normal() / static_cast<double>(k + 1);
    return x;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("validate rejects broken specs") {
    auto good = presets::linear_heat(4, 1.0, true);
    CHECK_NOTHROW(validate(good));

    auto s = good;
    s.eigenvalues[2] = 0.5;
    CHECK_THROWS_AS(validate(s), std::invalid_argument);

    s = good;
    s.q_weights.pop_back();
    CHECK_THROWS_AS(validate(s), std::invalid_argument);

    s = good;
    s.q_weights[0] = -1.0;
    CHECK_THROWS_AS(validate(s), std::invalid_argument);

    s = good;
    s.domain_radius = 0.0;
    CHECK_THROWS_AS(validate(s), std::invalid_argument);

    s = good;
    s.norm_kind = SupOnGrid{8};  // below 2N + 1
    CHECK_THROWS_AS(validate(s), std::invalid_argument);

    s = good;
    s.mode_count = 0;
    CHECK_THROWS_AS(validate(s), std::invalid_argument);
}

TEST_CASE("make_model picks 4N+1 collocation points") {
    ModelSpec s;
    s.mode_count = 5;
    s.eigenvalues = {-1, -4, -9, -16, -25};
    s.q_weights = {1, 1, 1, 1, 1};
    s.norm_kind = SupOnGrid{};
    CHECK(make_model(s).grid_points() == 21);
}

TEST_CASE("omega and max_rate") {
    const auto s = presets::linear_heat(3, 1.0, false);
    CHECK(s.omega() == doctest::Approx(1.0));
    CHECK(s.max_rate() == doctest::Approx(9.0));
}

TEST_CASE("json round trip for every preset") {
    for (const auto& name : presets::names()) {
        CAPTURE(name);
        const auto spec = presets::by_name(name);
        nlohmann::json j = spec;
        CHECK(model_from_json(j) == spec);
        CHECK(model_from_json(nlohmann::json::parse(j.dump())) == spec);
    }
    CHECK_THROWS_AS(presets::by_name("nope"), std::invalid_argument);
}

TEST_CASE("strict json parsing") {
    nlohmann::json j = presets::cubic_heat();
    auto extra = j;
    extra["colour"] = "blue";
    CHECK_THROWS_AS(model_from_json(extra), std::invalid_argument);

    auto missing = j;
    missing.erase("eigenvalues");
    CHECK_THROWS_AS(model_from_json(missing), std::invalid_argument);

    auto shorthand = j;
    shorthand["f_kind"] = "zero";
    CHECK(std::holds_alternative<ZeroDrift>(model_from_json(shorthand).f_kind));

    auto bad_kind = j;
    bad_kind["f_kind"] = {{"type", "quartic"}};
    CHECK_THROWS_AS(model_from_json(bad_kind), std::invalid_argument);
}

TEST_CASE("sine basis is orthonormal") {
    const std::size_t n = 5;
    for (std::size_t k = 1; k <= n; ++k) {
        const auto c = oracle::project([&](double xi) { return oracle::sine_basis(k, xi); }, n);
        for (std::size_t m = 0; m < n; ++m) CHECK(c[m] == doctest::Approx(m + 1 == k ? 1.0 : 0.0).epsilon(1e-7));
    }
    const auto spec = presets::linear_heat(5, 1.0, true);
    const auto& grid = collocation_for(spec);
    for (std::size_t j = 0; j < grid.points(); ++j)
        for (std::size_t k = 0; k < 5; ++k)
            CHECK(grid.basis(j, k) == doctest::Approx(oracle::sine_basis(k + 1, grid.node(j))).epsilon(1e-14));
}

TEST_CASE("collocation round trip and transposes") {
    Philox4x32 rng(3, 0);
    for (std::size_t n : {1u, 4u, 9u}) {
        for (std::size_t m : {2 * n + 1, 4 * n + 1, 7 * n}) {
            Collocation grid(n, m);
            const auto c = random_coeffs(n, rng);
            const auto back = grid.to_coeffs(grid.to_grid(c));
            for (std::size_t k = 0; k < n; ++k) CHECK(back[k] == doctest::Approx(c[k]).epsilon(1e-12));

            std::vector<double> v(m), lhs_tmp(n), rhs_tmp(m);
            for (auto& e : v) e = rng.normal();
            // <to_grid c, v> = <c, to_grid^T v>
            grid.to_grid_transpose(v, lhs_tmp);
            const auto g = grid.to_grid(c);
            double a = 0, b = 0;
            for (std::size_t j = 0; j < m; ++j) a += g[j] * v[j];
            for (std::size_t k = 0; k < n; ++k) b += c[k] * lhs_tmp[k];
            CHECK(a == doctest::Approx(b).epsilon(1e-12));
            // <to_coeffs v, c> = <v, to_coeffs^T c>
            std::vector<double> cv(n);
            grid.to_coeffs(v, cv);
            grid.to_coeffs_transpose(c.coeffs(), rhs_tmp);
            a = 0, b = 0;
            for (std::size_t k = 0; k < n; ++k) a += cv[k] * c[k];
            for (std::size_t j = 0; j < m; ++j) b += v[j] * rhs_tmp[j];
            CHECK(a == doctest::Approx(b).epsilon(1e-12));
        }
    }
}

TEST_CASE("semigroup property S(t+s) = S(t) S(s)") {
    Philox4x32 rng(5, 0);
    const auto spec = presets::linear_heat(6, 1.0, true);
    for (int rep = 0; rep < 20; ++rep) {
        const auto x = random_coeffs(6, rng);
        const double t = rng.uniform(), s = rng.uniform();
        const auto lhs = semigroup_apply(spec, t + s, x);
        const auto rhs = semigroup_apply(spec, t, semigroup_apply(spec, s, x));
        for (std::size_t k = 0; k < 6; ++k) CHECK(lhs[k] == doctest::Approx(rhs[k]).epsilon(1e-13));
    }
    const auto x = random_coeffs(6, rng);
    CHECK(semigroup_apply(spec, 0.0, x) == x);
}

TEST_CASE("grid sup norm brackets the continuous sup norm") {
    Philox4x32 rng(9, 0);
    const auto spec = presets::linear_heat(8, 1.0, true);
    const double tau = grid_tolerance(spec);
    CHECK(tau == doctest::Approx(1.0 / std::cos(8 * std::numbers::pi / 68) - 1.0));
    for (int rep = 0; rep < 50; ++rep) {
        SpectralField x(8);
        for (std::size_t k = 0; k < 8; ++k) x[k] = rng.normal();
        double dense = 0.0;
        for (int i = 1; i < 20000; ++i)
            dense = std::max(dense, std::abs(oracle::field_value(x.vec(), i * std::numbers::pi / 20000)));
        const double grid = sup_norm(spec, x);
        CHECK(grid <= dense * (1 + 1e-12));
        CHECK(dense <= (1.0 + tau) * grid * (1 + 1e-12));
    }
}

TEST_CASE("semigroup norm constant bounds S(t) on the grid") {
    CHECK(semigroup_norm_constant(presets::linear_heat(4, 1.0, false)) == 1.0);
    const auto spec = presets::linear_heat(8, 1.0, true);
    const double c = semigroup_norm_constant(spec);
    CHECK(c >= 1.0);
    Philox4x32 rng(10, 0);
    for (int rep = 0; rep < 200; ++rep) {
        SpectralField x(8);
        for (std::size_t k = 0; k < 8; ++k) x[k] = rng.normal();
        const double t = 3.0 * rng.uniform();
        CHECK(sup_norm(spec, semigroup_apply(spec, t, x)) <= c * std::exp(-t) * sup_norm(spec, x) * (1 + 1e-9));
    }
}

TEST_CASE("euclidean models act on coordinates") {
    const auto spec = presets::linear_heat(3, 2.0, false);
    const SpectralField x{1.0, -2.0, 0.5};
    CHECK(sup_norm(spec, x) == doctest::Approx(std::sqrt(5.25)));
    CHECK(pointwise_values(spec, x) == x.vec());
    CHECK(in_domain(spec, SpectralField{1.0, 1.0, 1.0}));
    CHECK_FALSE(in_domain(spec, SpectralField{2.0, 0.0, 0.0}));
    const std::vector<double> v{0.1, -3.0, 3.0};
    CHECK(argmax_abs(v) == 1);
}

}  // TEST_SUITE
