#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

namespace ldp {

/// State of the truncated system: coordinates against the eigenbasis {e_k}.
///
/// For sup-norm models the basis is e_k(xi) = sqrt(2/pi) sin(k xi) on [0, pi].
/// For euclidean models the coordinates are taken as point values on the
/// discrete index set {1..N}.
class SpectralField {
public:
    SpectralField() = default;
    explicit SpectralField(std::size_t n) : coeffs_(n, 0.0) {}
    explicit SpectralField(std::vector<double> coeffs);
    SpectralField(std::initializer_list<double> coeffs);

    static SpectralField unit(std::size_t n, std::size_t mode);  // mode is 1-based

    std::size_t size() const noexcept { return coeffs_.size(); }
    double& operator[](std::size_t i) { return coeffs_[i]; }
    double operator[](std::size_t i) const { return coeffs_[i]; }
    std::span<double> coeffs() noexcept { return coeffs_; }
    std::span<const double> coeffs() const noexcept { return coeffs_; }
    const std::vector<double>& vec() const noexcept { return coeffs_; }

    bool is_finite() const noexcept;
    double l2_norm() const noexcept;

    SpectralField& operator+=(const SpectralField& o);
    SpectralField& operator-=(const SpectralField& o);
    SpectralField& operator*=(double s);

    friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
    friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
    friend SpectralField operator*(double s, SpectralField a) { return a *= s; }
    friend bool operator==(const SpectralField&, const SpectralField&) = default;

private:
    std::vector<double> coeffs_;
};

struct ZeroDrift {
    friend bool operator==(const ZeroDrift&, const ZeroDrift&) = default;
};
/// F(x) = -lambda x.
struct LinearDamping {
    double lambda = 1.0;
    friend bool operator==(const LinearDamping&, const LinearDamping&) = default;
};
/// Nemytskii cubic F(x)(xi) = coefficient * x(xi)^3; the dissipative case is coefficient = -1.
struct CubicDrift {
    double coefficient = -1.0;
    friend bool operator==(const CubicDrift&, const CubicDrift&) = default;
};
using DriftKind = std::variant<ZeroDrift, LinearDamping, CubicDrift>;

/// Scalar function b used by multiplication-operator noise, (B(x)h)(xi) = b(x(xi)) h(xi).
struct ScalarFunction {
    enum class Type { constant, affine, sine };
    Type type = Type::constant;
    double value = 1.0;      // constant
    double slope = 0.0;      // affine: slope * r + intercept
    double intercept = 0.0;
    double amplitude = 1.0;  // sine: amplitude * sin(frequency * r) + offset
    double frequency = 1.0;
    double offset = 0.0;

    double operator()(double r) const noexcept;
    double derivative(double r) const noexcept;
    /// Lipschitz constant of b.
    double lipschitz() const noexcept;
    /// Smallest kappa (from the closed form) with |b(r)| <= kappa (1 + |r|).
    double growth() const noexcept;

    friend bool operator==(const ScalarFunction&, const ScalarFunction&) = default;
};

struct AdditiveNoise {
    friend bool operator==(const AdditiveNoise&, const AdditiveNoise&) = default;
};
struct MultiplicativeNoise {
    ScalarFunction b;
    friend bool operator==(const MultiplicativeNoise&, const MultiplicativeNoise&) = default;
};
using NoiseKind = std::variant<AdditiveNoise, MultiplicativeNoise>;

struct SupOnGrid {
    std::size_t points = 0;
    friend bool operator==(const SupOnGrid&, const SupOnGrid&) = default;
};
struct Euclidean {
    friend bool operator==(const Euclidean&, const Euclidean&) = default;
};
using NormKind = std::variant<SupOnGrid, Euclidean>;

/// One problem instance. Construct through make_model() or from_json(), both
/// of which validate the invariants.
struct ModelSpec {
    std::size_t mode_count = 1;
    std::vector<double> eigenvalues;
    std::vector<double> q_weights;
    DriftKind f_kind = ZeroDrift{};
    NoiseKind b_kind = AdditiveNoise{};
    double domain_radius = 1.0;
    NormKind norm_kind = Euclidean{};

    bool is_sup_grid() const noexcept { return std::holds_alternative<SupOnGrid>(norm_kind); }
    bool is_additive() const noexcept { return std::holds_alternative<AdditiveNoise>(b_kind); }
    std::size_t grid_points() const noexcept;
    /// Decay rate of the semigroup, min_k |mu_k|.
    double omega() const noexcept;
    double max_rate() const noexcept;

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Throws std::invalid_argument when an invariant is broken.
void validate(const ModelSpec& spec);
ModelSpec make_model(ModelSpec spec);

void to_json(nlohmann::json& j, const ModelSpec& spec);
/// Strict parse: unknown keys and missing fields are errors.
ModelSpec model_from_json(const nlohmann::json& j);

namespace presets {
/// dX = -omega X dt + sqrt(eps) q dW, G = (-R, R).
ModelSpec ornstein_uhlenbeck(double omega = 1.0, double q = 1.0, double radius = 1.0);
/// Linear heat equation, Q = I, mu_k = -k^2.
ModelSpec linear_heat(std::size_t modes, double radius, bool sup_norm);
/// Heat equation with F(x) = -x^3 and space-time white noise, sup-norm ball.
ModelSpec cubic_heat(std::size_t modes = 8, double radius = 1.0);
/// Same with the anti-dissipative F(x) = +x^3 (negative control).
ModelSpec wrong_sign_cubic_heat(std::size_t modes = 8, double radius = 1.0);
/// Cubic heat with multiplication noise b(r) = 1 + sin(r) / 2.
ModelSpec multiplicative_heat(std::size_t modes = 8, double radius = 1.0);
/// Scalar gradient flow dx = (-x - x^3) dt.
ModelSpec scalar_cubic(double radius = 1.0);
/// q_k = k, mu_k = -k^2: L_t is bounded but not compact and ||L_t|| stays at 1/sqrt(2).
ModelSpec stagnation(std::size_t modes = 64);
/// Look up one of the above by name; throws std::invalid_argument for unknown names.
ModelSpec by_name(const std::string& name);
std::vector<std::string> names();
}  // namespace presets

/// Uniform interior grid xi_j = j pi / (M + 1), j = 1..M, with the exact
/// discrete sine transform between N coefficients and M grid values.
class Collocation {
public:
    Collocation(std::size_t modes, std::size_t points);

    std::size_t modes() const noexcept { return modes_; }
    std::size_t points() const noexcept { return points_; }
    double node(std::size_t j) const noexcept;
    /// e_k(xi_j), k 0-based.
    double basis(std::size_t j, std::size_t k) const noexcept { return basis_[j * modes_ + k]; }

    /// coefficients -> grid values
    void to_grid(std::span<const double> coeffs, std::span<double> values) const;
    /// grid values -> coefficients of the first N modes
    void to_coeffs(std::span<const double> values, std::span<double> coeffs) const;
    /// Transpose of to_grid: grid weights -> coefficient space.
    void to_grid_transpose(std::span<const double> values, std::span<double> coeffs) const;
    /// Transpose of to_coeffs.
    void to_coeffs_transpose(std::span<const double> coeffs, std::span<double> values) const;

    std::vector<double> to_grid(const SpectralField& x) const;
    SpectralField to_coeffs(std::span<const double> values) const;

    double quadrature_weight() const noexcept { return weight_; }

private:
    std::size_t modes_;
    std::size_t points_;
    double weight_;
    std::vector<double> basis_;
};

/// Shared collocation grid for the spec (cached per (N, M)).
const Collocation& collocation_for(const ModelSpec& spec);

SpectralField semigroup_apply(const ModelSpec& spec, double t, const SpectralField& x);
double sup_norm(const ModelSpec& spec, const SpectralField& x);
bool in_domain(const ModelSpec& spec, const SpectralField& x);

/// Point values of the state: grid values for sup-norm models, coordinates otherwise.
std::vector<double> pointwise_values(const ModelSpec& spec, const SpectralField& x);
SpectralField from_pointwise(const ModelSpec& spec, std::span<const double> values);

/// Index of the point value attaining max |value|; smallest index on ties.
std::size_t argmax_abs(std::span<const double> values) noexcept;

/// Norm-equivalence constant C with |S(t) x|_E <= C e^{-omega t} |x|_E on the truncated space:
/// 1 for the euclidean norm, sup_t e^{omega t} ||Phi S(t) Phi^+||_inf on the grid otherwise.
double semigroup_norm_constant(const ModelSpec& spec);

/// Relative slack of the grid sup norm against the continuous sup norm of N-mode fields.
double grid_tolerance(const ModelSpec& spec);

}  // namespace ldp
